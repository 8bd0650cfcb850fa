#include "bpm/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#ifdef __AVX2__
#include <immintrin.h>
#endif

namespace bpm::nn {

namespace {

// ---- deterministic tanh -------------------------------------------------
// tanh(x) = sign(x) * (E - 1) / (E + 1) with E = exp(2|x|), computed with a
// fixed-order Cody-Waite reduction and Taylor polynomial so results do not
// depend on the host libm. Absolute error < 1e-15 against reference tanh.

constexpr double kLog2E = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-01;  // upper bits of ln 2
constexpr double kLn2Lo = 1.90821492927058770002e-10;
// 1/k! for k = 13 .. 2
constexpr double kExpC[] = {
    1.6059043836821614599e-10, 2.0876756987868098979e-09,
    2.5052108385441718775e-08, 2.7557319223985890653e-07,
    2.7557319223985892511e-06, 2.4801587301587301566e-05,
    1.9841269841269841253e-04, 1.3888888888888889419e-03,
    8.3333333333333332177e-03, 4.1666666666666664354e-02,
    1.6666666666666665741e-01, 5.0000000000000000000e-01,
};

inline double tanh_one(double x) {
    const double ax = std::fabs(x);
    double y = 2.0 * ax;
    if (y > 44.0) y = 44.0;  // tanh saturates to 1.0 well before this
    const double n = std::nearbyint(y * kLog2E);
    const double r = std::fma(n, -kLn2Lo, std::fma(n, -kLn2Hi, y));
    double p = kExpC[0];
    for (int i = 1; i < 12; ++i) p = std::fma(p, r, kExpC[i]);
    const double er = std::fma(r, std::fma(r, p, 1.0), 1.0);
    // scale by 2^n through the exponent field; n is in [0, 64]
    std::uint64_t bits = (static_cast<std::uint64_t>(n) + 1023ULL) << 52;
    double scale;
    std::memcpy(&scale, &bits, 8);
    const double e = er * scale;
    const double t = (e - 1.0) / (e + 1.0);
    return x < 0.0 ? -t : t;
}

#ifdef __AVX2__
inline __m256d tanh_pd(__m256d x) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d sign = _mm256_and_pd(x, sign_mask);
    const __m256d ax = _mm256_andnot_pd(sign_mask, x);
    __m256d y = _mm256_add_pd(ax, ax);
    y = _mm256_min_pd(y, _mm256_set1_pd(44.0));
    const __m256d n =
        _mm256_round_pd(_mm256_mul_pd(y, _mm256_set1_pd(kLog2E)),
                        _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fmadd_pd(n, _mm256_set1_pd(-kLn2Hi), y);
    r = _mm256_fmadd_pd(n, _mm256_set1_pd(-kLn2Lo), r);
    __m256d p = _mm256_set1_pd(kExpC[0]);
    for (int i = 1; i < 12; ++i)
        p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kExpC[i]));
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d er = _mm256_fmadd_pd(r, _mm256_fmadd_pd(r, p, one), one);
    // n is a small non-negative integer; adding 2^52 leaves it in the low
    // mantissa bits, giving a cheap double -> int64 conversion
    const __m256i ni = _mm256_castpd_si256(
        _mm256_add_pd(n, _mm256_set1_pd(4503599627370496.0)));
    const __m256i expo = _mm256_slli_epi64(
        _mm256_and_si256(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)),
                         _mm256_set1_epi64x(0xfff)),
        52);
    const __m256d e = _mm256_mul_pd(er, _mm256_castsi256_pd(expo));
    const __m256d t =
        _mm256_div_pd(_mm256_sub_pd(e, one), _mm256_add_pd(e, one));
    return _mm256_or_pd(t, sign);
}
#endif

void tanh_inplace(double* v, std::size_t n) {
#ifdef __AVX2__
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(v + i, tanh_pd(_mm256_loadu_pd(v + i)));
    for (; i < n; ++i) v[i] = tanh_one(v[i]);
#else
    for (std::size_t i = 0; i < n; ++i) v[i] = tanh_one(v[i]);
#endif
}

// Contiguous dot product with a fixed 4-lane association:
// ((l0 + l1) + (l2 + l3)) + tail, lanes by k mod 4.
inline double dot_contig(const double* a, const double* b, int n) {
#ifdef __AVX2__
    __m256d acc = _mm256_setzero_pd();
    int k = 0;
    for (; k + 4 <= n; k += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc);
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    double tail = 0.0;
    for (; k < n; ++k) tail += a[k] * b[k];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + tail;
#else
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0, tail = 0.0;
    int k = 0;
    for (; k + 4 <= n; k += 4) {
        l0 = std::fma(a[k], b[k], l0);
        l1 = std::fma(a[k + 1], b[k + 1], l1);
        l2 = std::fma(a[k + 2], b[k + 2], l2);
        l3 = std::fma(a[k + 3], b[k + 3], l3);
    }
    for (; k < n; ++k) tail += a[k] * b[k];
    return ((l0 + l1) + (l2 + l3)) + tail;
#endif
}

int layer_count(const MlpSpec& spec) { return static_cast<int>(spec.layers.size()) - 1; }

// Offset of layer l's block in the flat parameter vector. Within a block the
// weights come first in input-major order (Wt[k*out + j], the transpose of
// the usual row-major form, chosen so the forward pass accumulates along
// contiguous memory), then the biases.
int layer_offset(const MlpSpec& spec, int l) {
    int off = 0;
    for (int i = 0; i < l; ++i) off += (spec.layers[i] + 1) * spec.layers[i + 1];
    return off;
}

void check_params(const ParamVector& params) {
    params.spec.validate();
    if (static_cast<int>(params.values.size()) != params.spec.param_count())
        throw std::invalid_argument("param vector size does not match spec");
}

void ensure_workspace(const MlpSpec& spec, int batch, Workspace& ws) {
    const int nl = layer_count(spec);
    ws.batch = batch;
    ws.acts.resize(nl + 1);
    ws.deltas.resize(nl);
    for (int l = 0; l <= nl; ++l)
        ws.acts[l].resize(static_cast<std::size_t>(batch) * spec.layers[l]);
    for (int l = 0; l < nl; ++l)
        ws.deltas[l].resize(static_cast<std::size_t>(batch) * spec.layers[l + 1]);
}

// Y[B x out] = X[B x in] * Wt[in x out] + bias, processing samples in blocks
// of four so each Wt row is loaded once per block. Per-output accumulation
// order is plain ascending k for every sample, so results are independent of
// the batch size.
void layer_forward(const double* __restrict Wt, const double* __restrict bias,
                   const double* __restrict X, double* __restrict Y, int B,
                   int in, int out) {
    int b0 = 0;
    for (; b0 + 4 <= B; b0 += 4) {
        const double* x0 = X + static_cast<std::size_t>(b0) * in;
        const double* x1 = x0 + in;
        const double* x2 = x1 + in;
        const double* x3 = x2 + in;
        double* y0 = Y + static_cast<std::size_t>(b0) * out;
        double* y1 = y0 + out;
        double* y2 = y1 + out;
        double* y3 = y2 + out;
        std::memcpy(y0, bias, out * sizeof(double));
        std::memcpy(y1, bias, out * sizeof(double));
        std::memcpy(y2, bias, out * sizeof(double));
        std::memcpy(y3, bias, out * sizeof(double));
        for (int k = 0; k < in; ++k) {
            const double* w = Wt + static_cast<std::size_t>(k) * out;
            const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
            for (int j = 0; j < out; ++j) {
                const double wj = w[j];
                y0[j] = std::fma(wj, a0, y0[j]);
                y1[j] = std::fma(wj, a1, y1[j]);
                y2[j] = std::fma(wj, a2, y2[j]);
                y3[j] = std::fma(wj, a3, y3[j]);
            }
        }
    }
    for (; b0 < B; ++b0) {
        const double* x = X + static_cast<std::size_t>(b0) * in;
        double* y = Y + static_cast<std::size_t>(b0) * out;
        std::memcpy(y, bias, out * sizeof(double));
        for (int k = 0; k < in; ++k) {
            const double* w = Wt + static_cast<std::size_t>(k) * out;
            const double a = x[k];
            for (int j = 0; j < out; ++j) y[j] = std::fma(w[j], a, y[j]);
        }
    }
}

// Accumulate weight/bias gradients for one layer from batch deltas D[B x out]
// and inputs X[B x in]; optionally produce input deltas DX[B x in].
void layer_backward(const double* __restrict Wt, const double* __restrict X,
                    const double* __restrict D, double* __restrict GW,
                    double* __restrict GB, double* __restrict DX, int B, int in,
                    int out) {
    for (int b = 0; b < B; ++b) {
        const double* d = D + static_cast<std::size_t>(b) * out;
        for (int j = 0; j < out; ++j) GB[j] += d[j];
    }
    int b0 = 0;
    for (; b0 + 4 <= B; b0 += 4) {
        const double* x0 = X + static_cast<std::size_t>(b0) * in;
        const double* x1 = x0 + in;
        const double* x2 = x1 + in;
        const double* x3 = x2 + in;
        const double* d0 = D + static_cast<std::size_t>(b0) * out;
        const double* d1 = d0 + out;
        const double* d2 = d1 + out;
        const double* d3 = d2 + out;
        for (int k = 0; k < in; ++k) {
            double* gw = GW + static_cast<std::size_t>(k) * out;
            const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
            for (int j = 0; j < out; ++j) {
                double g = gw[j];
                g = std::fma(a0, d0[j], g);
                g = std::fma(a1, d1[j], g);
                g = std::fma(a2, d2[j], g);
                g = std::fma(a3, d3[j], g);
                gw[j] = g;
            }
        }
        if (DX != nullptr) {
            for (int k = 0; k < in; ++k) {
                const double* w = Wt + static_cast<std::size_t>(k) * out;
                DX[static_cast<std::size_t>(b0) * in + k] = dot_contig(w, d0, out);
                DX[static_cast<std::size_t>(b0 + 1) * in + k] = dot_contig(w, d1, out);
                DX[static_cast<std::size_t>(b0 + 2) * in + k] = dot_contig(w, d2, out);
                DX[static_cast<std::size_t>(b0 + 3) * in + k] = dot_contig(w, d3, out);
            }
        }
    }
    for (; b0 < B; ++b0) {
        const double* x = X + static_cast<std::size_t>(b0) * in;
        const double* d = D + static_cast<std::size_t>(b0) * out;
        for (int k = 0; k < in; ++k) {
            double* gw = GW + static_cast<std::size_t>(k) * out;
            const double a = x[k];
            for (int j = 0; j < out; ++j) gw[j] = std::fma(a, d[j], gw[j]);
        }
        if (DX != nullptr) {
            for (int k = 0; k < in; ++k) {
                const double* w = Wt + static_cast<std::size_t>(k) * out;
                DX[static_cast<std::size_t>(b0) * in + k] = dot_contig(w, d, out);
            }
        }
    }
}

}  // namespace

int MlpSpec::param_count() const {
    int n = 0;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
        n += (layers[i] + 1) * layers[i + 1];
    return n;
}

void MlpSpec::validate() const {
    if (layers.size() < 2)
        throw std::invalid_argument("mlp needs at least input and output layers");
    for (int w : layers)
        if (w < 1) throw std::invalid_argument("mlp layer width must be positive");
}

ParamVector init_params(const MlpSpec& spec, RngStream& rng) {
    spec.validate();
    ParamVector p;
    p.spec = spec;
    p.values.resize(spec.param_count());
    const int nl = layer_count(spec);
    int off = 0;
    for (int l = 0; l < nl; ++l) {
        const int in = spec.layers[l], out = spec.layers[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        const double scale = (l == nl - 1) ? 0.01 : 1.0;
        for (int k = 0; k < (in + 1) * out; ++k)
            p.values[off + k] = scale * rng.uniform(-bound, bound);
        off += (in + 1) * out;
    }
    return p;
}

std::span<const double> forward_ws(const ParamVector& params,
                                   std::span<const double> input, Workspace& ws) {
    check_params(params);
    const MlpSpec& spec = params.spec;
    const int in0 = spec.layers.front();
    if (input.empty() || input.size() % in0 != 0)
        throw std::invalid_argument("input size is not a multiple of the input width");
    const int B = static_cast<int>(input.size()) / in0;
    const int nl = layer_count(spec);
    ensure_workspace(spec, B, ws);
    std::memcpy(ws.acts[0].data(), input.data(), input.size() * sizeof(double));
    for (int l = 0; l < nl; ++l) {
        const int in = spec.layers[l], out = spec.layers[l + 1];
        const double* w = params.values.data() + layer_offset(spec, l);
        const double* bias = w + static_cast<std::size_t>(in) * out;
        layer_forward(w, bias, ws.acts[l].data(), ws.acts[l + 1].data(), B, in, out);
        if (l < nl - 1 || spec.output == OutputActivation::Tanh)
            tanh_inplace(ws.acts[l + 1].data(), ws.acts[l + 1].size());
    }
    return ws.acts[nl];
}

std::vector<double> forward(const ParamVector& params, std::span<const double> input) {
    Workspace ws;
    auto out = forward_ws(params, input, ws);
    return {out.begin(), out.end()};
}

void backward_ws(const ParamVector& params, std::span<const double> output_grad,
                 Workspace& ws, std::span<double> param_grad_accum,
                 std::span<double> input_grad) {
    const MlpSpec& spec = params.spec;
    const int nl = layer_count(spec);
    const int B = ws.batch;
    if (B < 1 || static_cast<int>(ws.acts.size()) != nl + 1)
        throw std::runtime_error("backward_ws called without matching forward_ws");
    if (output_grad.size() != static_cast<std::size_t>(B) * spec.layers[nl])
        throw std::invalid_argument("output gradient size does not match batch");
    if (static_cast<int>(param_grad_accum.size()) != spec.param_count())
        throw std::invalid_argument("gradient accumulator size does not match spec");
    if (!input_grad.empty() &&
        input_grad.size() != static_cast<std::size_t>(B) * spec.layers[0])
        throw std::invalid_argument("input gradient size does not match batch");

    {  // delta on the final layer's pre-activations
        double* d = ws.deltas[nl - 1].data();
        const double* a = ws.acts[nl].data();
        if (spec.output == OutputActivation::Tanh) {
            for (std::size_t i = 0; i < output_grad.size(); ++i)
                d[i] = output_grad[i] * (1.0 - a[i] * a[i]);
        } else {
            std::memcpy(d, output_grad.data(), output_grad.size() * sizeof(double));
        }
    }

    for (int l = nl - 1; l >= 0; --l) {
        const int in = spec.layers[l], out = spec.layers[l + 1];
        const int off = layer_offset(spec, l);
        const double* w = params.values.data() + off;
        double* gw = param_grad_accum.data() + off;
        double* gb = gw + static_cast<std::size_t>(in) * out;
        double* dx = (l > 0) ? ws.deltas[l - 1].data()
                             : (input_grad.empty() ? nullptr : input_grad.data());
        layer_backward(w, ws.acts[l].data(), ws.deltas[l].data(), gw, gb, dx, B,
                       in, out);
        // acts[l] holds layer l-1's tanh output; fold its derivative into the
        // propagated deltas
        if (l > 0) {
            double* dprev = ws.deltas[l - 1].data();
            const double* t = ws.acts[l].data();
            const std::size_t n = ws.deltas[l - 1].size();
            for (std::size_t i = 0; i < n; ++i) dprev[i] *= 1.0 - t[i] * t[i];
        }
    }
}

BackwardResult backward(const ParamVector& params, std::span<const double> input,
                        std::span<const double> output_grad) {
    Workspace ws;
    forward_ws(params, input, ws);
    BackwardResult r;
    r.param_grad.values.assign(params.spec.param_count(), 0.0);
    r.input_grad.assign(input.size(), 0.0);
    backward_ws(params, output_grad, ws, r.param_grad.values, r.input_grad);
    return r;
}

AdamState make_adam_state(const MlpSpec& spec) {
    spec.validate();
    AdamState s;
    s.m.assign(spec.param_count(), 0.0);
    s.v.assign(spec.param_count(), 0.0);
    return s;
}

void adam_step(ParamVector& params, const Gradient& grad, AdamState& state,
               const AdamConfig& config) {
    const std::size_t n = params.values.size();
    if (grad.values.size() != n || state.m.size() != n || state.v.size() != n)
        throw std::invalid_argument("adam_step: size mismatch");
    for (double g : grad.values)
        if (!std::isfinite(g))
            throw std::runtime_error("adam_step: non-finite gradient");
    state.step_count += 1;
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    const double* g = grad.values.data();
    double* m = state.m.data();
    double* v = state.v.data();
    double* p = params.values.data();
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
    }
}

void save_params(const ParamVector& params, const std::filesystem::path& path) {
    check_params(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    std::ostringstream header;
    header << "mlp ";
    for (std::size_t i = 0; i < params.spec.layers.size(); ++i) {
        if (i > 0) header << ',';
        header << params.spec.layers[i];
    }
    header << ' '
           << (params.spec.output == OutputActivation::Tanh ? "tanh" : "linear")
           << '\n';
    out << header.str();
    std::vector<unsigned char> buf(params.values.size() * 8);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &params.values[i], 8);
        for (int b = 0; b < 8; ++b)
            buf[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ParamVector load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::string header;
    if (!std::getline(in, header))
        throw std::runtime_error("truncated parameter file: " + path.string());
    std::istringstream hs(header);
    std::string magic, sizes, act;
    if (!(hs >> magic >> sizes >> act) || magic != "mlp")
        throw std::runtime_error("bad parameter header: " + path.string());
    ParamVector p;
    std::istringstream ss(sizes);
    std::string tok;
    while (std::getline(ss, tok, ',')) p.spec.layers.push_back(std::stoi(tok));
    if (act == "tanh") {
        p.spec.output = OutputActivation::Tanh;
    } else if (act == "linear") {
        p.spec.output = OutputActivation::Linear;
    } else {
        throw std::runtime_error("bad activation in header: " + path.string());
    }
    p.spec.validate();
    const int n = p.spec.param_count();
    std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 8);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("truncated parameter file: " + path.string());
    p.values.resize(n);
    for (int i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
        std::memcpy(&p.values[i], &bits, 8);
    }
    return p;
}

}  // namespace bpm::nn
