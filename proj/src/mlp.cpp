#include "matchrl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace matchrl {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Linear: return "linear";
        case Activation::Softmax: return "softmax";
    }
    return "linear";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "linear") return Activation::Linear;
    if (name == "softmax") return Activation::Softmax;
    throw std::invalid_argument("unknown activation: " + name);
}

std::size_t Mlp::parameter_count() const {
    std::size_t c = 0;
    for (const Layer& l : layers) c += l.w.size() + l.b.size();
    return c;
}

GradRecord GradRecord::zeros(const Mlp& net) {
    GradRecord g;
    g.dw.reserve(net.layers.size());
    g.db.reserve(net.layers.size());
    for (const Layer& l : net.layers) {
        g.dw.emplace_back(l.w.size(), 0.0);
        g.db.emplace_back(l.b.size(), 0.0);
    }
    g.input_grad.assign(net.input_size(), 0.0);
    return g;
}

void GradRecord::accumulate(const GradRecord& other) {
    for (std::size_t l = 0; l < dw.size(); ++l) {
        for (std::size_t k = 0; k < dw[l].size(); ++k) dw[l][k] += other.dw[l][k];
        for (std::size_t k = 0; k < db[l].size(); ++k) db[l][k] += other.db[l][k];
    }
    for (std::size_t k = 0; k < input_grad.size(); ++k) input_grad[k] += other.input_grad[k];
    loss += other.loss;
}

void GradRecord::scale(double s) {
    for (auto& v : dw)
        for (double& x : v) x *= s;
    for (auto& v : db)
        for (double& x : v) x *= s;
    for (double& x : input_grad) x *= s;
    loss *= s;
}

Mlp init_network(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
                 double final_layer_bound, RngStream& rng) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("init_network: need at least input and output sizes");
    if (activations.size() != layer_sizes.size() - 1)
        throw std::invalid_argument("init_network: one activation per layer required");
    for (std::size_t l = 0; l + 1 < activations.size(); ++l)
        if (activations[l] == Activation::Softmax)
            throw std::invalid_argument("init_network: softmax only as the final activation");
    Mlp net;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        Layer layer;
        layer.in = layer_sizes[l];
        layer.out = layer_sizes[l + 1];
        if (layer.in < 1 || layer.out < 1)
            throw std::invalid_argument("init_network: layer sizes must be >= 1");
        layer.act = activations[l];
        bool final_layer = (l + 2 == layer_sizes.size());
        double bound = final_layer ? final_layer_bound
                                   : 1.0 / std::sqrt(static_cast<double>(layer.in));
        layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
        layer.b.resize(layer.out);
        for (double& v : layer.w) v = (2.0 * rng.uniform() - 1.0) * bound;
        for (double& v : layer.b) v = (2.0 * rng.uniform() - 1.0) * bound;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

void apply_layer(const Layer& l, const Vec& in, Vec& pre, Vec& post) {
    pre.resize(l.out);
    for (int o = 0; o < l.out; ++o) {
        const double* wr = &l.w[static_cast<std::size_t>(o) * l.in];
        double acc = l.b[o];
        for (int i = 0; i < l.in; ++i) acc += wr[i] * in[i];
        pre[o] = acc;
    }
    post = pre;
    switch (l.act) {
        case Activation::ReLU:
            for (double& v : post) v = std::max(0.0, v);
            break;
        case Activation::Linear:
            break;
        case Activation::Softmax: {
            double m = *std::max_element(post.begin(), post.end());
            double z = 0.0;
            for (double& v : post) {
                v = std::exp(v - m);
                z += v;
            }
            for (double& v : post) v /= z;
            break;
        }
    }
}

} // namespace

Vec forward(const Mlp& net, const Vec& input) {
    if (static_cast<int>(input.size()) != net.input_size())
        throw std::invalid_argument("forward: input size mismatch");
    Vec cur = input, pre, post;
    for (const Layer& l : net.layers) {
        apply_layer(l, cur, pre, post);
        cur = post;
    }
    return cur;
}

namespace {

// Backward sweep shared by the three entry points; parameter gradients are
// accumulated into `acc` when it is non-null.
Vec backward_sweep(const Mlp& net, const Vec& input, const Vec& upstream, GradRecord* acc) {
    if (static_cast<int>(input.size()) != net.input_size())
        throw std::invalid_argument("backward: input size mismatch");
    if (static_cast<int>(upstream.size()) != net.output_size())
        throw std::invalid_argument("backward: upstream size mismatch");

    std::size_t L = net.layers.size();
    std::vector<Vec> pres(L), posts(L);
    {
        const Vec* cur = &input;
        for (std::size_t l = 0; l < L; ++l) {
            apply_layer(net.layers[l], *cur, pres[l], posts[l]);
            cur = &posts[l];
        }
    }

    Vec delta = upstream; // d(scalar)/d(post-activation)
    for (std::size_t li = L; li-- > 0;) {
        const Layer& l = net.layers[li];
        Vec dz(l.out);
        switch (l.act) {
            case Activation::ReLU:
                for (int o = 0; o < l.out; ++o) dz[o] = pres[li][o] > 0.0 ? delta[o] : 0.0;
                break;
            case Activation::Linear:
                dz = delta;
                break;
            case Activation::Softmax: {
                const Vec& y = posts[li];
                double dot = 0.0;
                for (int o = 0; o < l.out; ++o) dot += delta[o] * y[o];
                for (int o = 0; o < l.out; ++o) dz[o] = y[o] * (delta[o] - dot);
                break;
            }
        }
        if (acc) {
            const Vec& x = li == 0 ? input : posts[li - 1];
            for (int o = 0; o < l.out; ++o) {
                double* dwr = &acc->dw[li][static_cast<std::size_t>(o) * l.in];
                double d = dz[o];
                for (int i = 0; i < l.in; ++i) dwr[i] += d * x[i];
                acc->db[li][o] += d;
            }
        }
        Vec dx(l.in, 0.0);
        for (int o = 0; o < l.out; ++o) {
            const double* wr = &l.w[static_cast<std::size_t>(o) * l.in];
            double d = dz[o];
            for (int i = 0; i < l.in; ++i) dx[i] += wr[i] * d;
        }
        delta = std::move(dx);
    }
    return delta;
}

} // namespace

GradRecord backward(const Mlp& net, const Vec& input, const Vec& upstream) {
    GradRecord g = GradRecord::zeros(net);
    g.input_grad = backward_sweep(net, input, upstream, &g);
    return g;
}

void backward_acc(const Mlp& net, const Vec& input, const Vec& upstream, GradRecord& acc) {
    Vec dx = backward_sweep(net, input, upstream, &acc);
    for (std::size_t k = 0; k < acc.input_grad.size(); ++k) acc.input_grad[k] += dx[k];
}

Vec input_gradient(const Mlp& net, const Vec& input, const Vec& upstream) {
    return backward_sweep(net, input, upstream, nullptr);
}

OptimizerState OptimizerState::make(OptimizerKind kind, double lr, const Mlp& net) {
    OptimizerState s;
    s.kind = kind;
    s.lr = lr;
    if (kind == OptimizerKind::Adam) {
        for (const Layer& l : net.layers) {
            s.mw.emplace_back(l.w.size(), 0.0);
            s.vw.emplace_back(l.w.size(), 0.0);
            s.mb.emplace_back(l.b.size(), 0.0);
            s.vb.emplace_back(l.b.size(), 0.0);
        }
    }
    return s;
}

namespace {

void adam_update(Vec& theta, const Vec& grad, Vec& m, Vec& v, const OptimizerState& s,
                 double bc1, double bc2) {
    for (std::size_t k = 0; k < theta.size(); ++k) {
        m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * grad[k];
        v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * grad[k] * grad[k];
        double mhat = m[k] / bc1;
        double vhat = v[k] / bc2;
        theta[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

} // namespace

void optimizer_step(Mlp& net, const GradRecord& grads, OptimizerState& state) {
    if (state.kind == OptimizerKind::SGD) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            Layer& layer = net.layers[l];
            for (std::size_t k = 0; k < layer.w.size(); ++k)
                layer.w[k] -= state.lr * grads.dw[l][k];
            for (std::size_t k = 0; k < layer.b.size(); ++k)
                layer.b[k] -= state.lr * grads.db[l][k];
        }
        ++state.step_count;
        return;
    }
    ++state.step_count;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        adam_update(net.layers[l].w, grads.dw[l], state.mw[l], state.vw[l], state, bc1, bc2);
        adam_update(net.layers[l].b, grads.db[l], state.mb[l], state.vb[l], state, bc1, bc2);
    }
}

std::string mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json jl;
        jl["in"] = l.in;
        jl["out"] = l.out;
        jl["activation"] = activation_name(l.act);
        jl["weights"] = l.w;
        jl["biases"] = l.b;
        j["layers"].push_back(std::move(jl));
    }
    return j.dump();
}

Mlp mlp_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Mlp net;
    for (const auto& jl : j.at("layers")) {
        Layer l;
        l.in = jl.at("in").get<int>();
        l.out = jl.at("out").get<int>();
        l.act = activation_from_name(jl.at("activation").get<std::string>());
        l.w = jl.at("weights").get<Vec>();
        l.b = jl.at("biases").get<Vec>();
        if (l.w.size() != static_cast<std::size_t>(l.in) * l.out ||
            l.b.size() != static_cast<std::size_t>(l.out))
            throw std::invalid_argument("mlp_from_json: shape mismatch");
        net.layers.push_back(std::move(l));
    }
    return net;
}

} // namespace matchrl
