#pragma once

#include <string>
#include <vector>

#include "matchrl/core.hpp"
#include "matchrl/rng.hpp"

namespace matchrl {

enum class Activation { ReLU, Linear, Softmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
    int in = 0;
    int out = 0;
    Vec w; // out x in, row-major
    Vec b;
    Activation act = Activation::Linear;
};

// Dense feedforward network, 64-bit arithmetic throughout.
struct Mlp {
    std::vector<Layer> layers;

    int input_size() const { return layers.empty() ? 0 : layers.front().in; }
    int output_size() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t parameter_count() const;
};

struct GradRecord {
    std::vector<Vec> dw, db; // shapes mirror the parameters
    Vec input_grad;
    double loss = 0.0;

    static GradRecord zeros(const Mlp& net);
    void accumulate(const GradRecord& other);
    void scale(double s);
};

// Hidden layers uniform in +-1/sqrt(fan_in); the final layer uniform in
// +-final_layer_bound (weights and biases).
Mlp init_network(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
                 double final_layer_bound, RngStream& rng);

Vec forward(const Mlp& net, const Vec& input);

// Gradients of the scalar sum(upstream . output) with respect to every
// parameter and to the input; `upstream` is d(scalar)/d(output).
GradRecord backward(const Mlp& net, const Vec& input, const Vec& upstream);

// Same gradients accumulated into `acc` without an intermediate record;
// batched training loops use this to avoid per-sample allocation.
void backward_acc(const Mlp& net, const Vec& input, const Vec& upstream, GradRecord& acc);

// Only d(scalar)/d(input); skips the parameter gradients.
Vec input_gradient(const Mlp& net, const Vec& input, const Vec& upstream);

enum class OptimizerKind { SGD, Adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long step_count = 0;
    std::vector<Vec> mw, vw, mb, vb; // Adam moments

    static OptimizerState make(OptimizerKind kind, double lr, const Mlp& net);
};

void optimizer_step(Mlp& net, const GradRecord& grads, OptimizerState& state);

// Bit-exact JSON round-trip (layer sizes, activations, row-major weights).
std::string mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& text);

} // namespace matchrl
