#pragma once
#include <filesystem>
#include <span>
#include <vector>

#include "bpm/rng.hpp"

namespace bpm::nn {

enum class OutputActivation { Tanh, Linear };

// Dense feed-forward net, tanh hidden layers. Parameters are stored flat per
// layer as an input-major weight block [in x out] (weight k*out+j feeds input
// k into output j) followed by the bias block; the transposed layout lets the
// forward pass accumulate along contiguous memory.
struct MlpSpec {
    std::vector<int> layers;  // input..output widths
    OutputActivation output = OutputActivation::Linear;

    int param_count() const;
    void validate() const;  // throws std::invalid_argument
    bool operator==(const MlpSpec&) const = default;
};

struct ParamVector {
    std::vector<double> values;
    MlpSpec spec;
};

struct Gradient {
    std::vector<double> values;
};

// Reusable activation/delta buffers for the hot training path. acts[0] holds
// the input, acts[l+1] the output of layer l; with a batch each buffer is
// row-major [batch x width].
struct Workspace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> deltas;
    int batch = 0;
};

// Uniform fan-in init, final layer scaled by 0.01 so initial outputs are
// near zero.
ParamVector init_params(const MlpSpec& spec, RngStream& rng);

std::vector<double> forward(const ParamVector& params, std::span<const double> input);

struct BackwardResult {
    Gradient param_grad;
    std::vector<double> input_grad;
};

// Reverse-mode gradient of output . output_grad with respect to parameters
// and input.
BackwardResult backward(const ParamVector& params, std::span<const double> input,
                        std::span<const double> output_grad);

// Workspace variants used by the training loops. The input may stack several
// samples row-major; the batch size is inferred from input.size(), and every
// per-sample result is bit-identical to a single-sample call. backward_ws
// consumes the activations left by the immediately preceding forward_ws call
// with the same parameters, accumulates (+=) the batch-summed gradient into
// param_grad_accum, and writes the per-sample input gradients if input_grad
// is non-empty.
std::span<const double> forward_ws(const ParamVector& params,
                                   std::span<const double> input, Workspace& ws);
void backward_ws(const ParamVector& params, std::span<const double> output_grad,
                 Workspace& ws, std::span<double> param_grad_accum,
                 std::span<double> input_grad);

struct AdamState {
    std::vector<double> m, v;
    long step_count = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const MlpSpec& spec);

// Bias-corrected first-order adaptive update. Rejects non-finite gradients
// with a diagnostic error before touching params or moments.
void adam_step(ParamVector& params, const Gradient& grad, AdamState& state,
               const AdamConfig& config);

// On-disk format: one text header line "mlp <w0,w1,...> <tanh|linear>\n"
// followed by the raw little-endian 64-bit floats.
void save_params(const ParamVector& params, const std::filesystem::path& path);
ParamVector load_params(const std::filesystem::path& path);

}  // namespace bpm::nn
