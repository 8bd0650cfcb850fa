#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "bpm/mlp.hpp"

using namespace bpm;
using nn::MlpSpec;
using nn::OutputActivation;
using nn::ParamVector;

namespace {

// Straight-line reference forward pass: plain sequential accumulation, no
// shared code with the library kernels.
std::vector<double> forward_oracle(const ParamVector& p, std::vector<double> x) {
    const int nl = static_cast<int>(p.spec.layers.size()) - 1;
    int off = 0;
    for (int l = 0; l < nl; ++l) {
        const int ni = p.spec.layers[l], no = p.spec.layers[l + 1];
        std::vector<double> y(no);
        for (int j = 0; j < no; ++j) {
            double z = p.values[off + ni * no + j];
            for (int k = 0; k < ni; ++k) z += p.values[off + k * no + j] * x[k];
            const bool squash =
                (l < nl - 1) || p.spec.output == OutputActivation::Tanh;
            y[j] = squash ? std::tanh(z) : z;
        }
        x = std::move(y);
        off += (ni + 1) * no;
    }
    return x;
}

double loss(const ParamVector& p, const std::vector<double>& x,
            const std::vector<double>& c) {
    auto out = forward_oracle(p, x);
    double s = 0.0;
    for (size_t j = 0; j < out.size(); ++j) s += c[j] * out[j];
    return s;
}

ParamVector random_net(const MlpSpec& spec, uint64_t seed) {
    RngStream rng(seed);
    ParamVector p;
    p.spec = spec;
    p.values.resize(spec.param_count());
    for (double& v : p.values) v = rng.uniform(-0.8, 0.8);
    return p;
}

}  // namespace

TEST_CASE("forward pass matches the loop oracle") {
    RngStream rng(17);
    for (const auto& spec :
         {MlpSpec{{4, 5, 3}, OutputActivation::Tanh},
          MlpSpec{{3, 6, 6, 1}, OutputActivation::Linear},
          MlpSpec{{22, 64, 64, 8}, OutputActivation::Tanh},
          MlpSpec{{1, 1}, OutputActivation::Linear},
          MlpSpec{{7, 13, 2}, OutputActivation::Linear}}) {
        ParamVector p = random_net(spec, 1000 + spec.layers[0]);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x(spec.layers.front());
            for (double& v : x) v = rng.uniform(-2.0, 2.0);
            auto got = nn::forward(p, x);
            auto want = forward_oracle(p, x);
            REQUIRE(got.size() == want.size());
            for (size_t j = 0; j < got.size(); ++j)
                CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("batched calls are bit-identical to single-sample calls") {
    MlpSpec spec{{6, 9, 4}, OutputActivation::Tanh};
    ParamVector p = random_net(spec, 301);
    RngStream rng(302);
    const int B = 7;  // exercises both the 4-wide block and the tail path
    std::vector<double> X(B * 6), OG(B * 4);
    for (double& v : X) v = rng.uniform(-1.5, 1.5);
    for (double& v : OG) v = rng.uniform(-1.0, 1.0);

    nn::Workspace bws;
    auto batch_out = nn::forward_ws(p, X, bws);
    REQUIRE(batch_out.size() == static_cast<size_t>(B * 4));
    std::vector<double> batch_g(spec.param_count(), 0.0);
    std::vector<double> batch_ig(B * 6, 0.0);
    nn::backward_ws(p, OG, bws, batch_g, batch_ig);

    std::vector<double> sum_g(spec.param_count(), 0.0);
    for (int b = 0; b < B; ++b) {
        std::vector<double> x(X.begin() + b * 6, X.begin() + (b + 1) * 6);
        std::vector<double> c(OG.begin() + b * 4, OG.begin() + (b + 1) * 4);
        auto out = nn::forward(p, x);
        for (int j = 0; j < 4; ++j)
            CHECK(out[j] == batch_out[b * 4 + j]);  // exact
        auto res = nn::backward(p, x, c);
        for (int k = 0; k < 6; ++k)
            CHECK(res.input_grad[k] == batch_ig[b * 6 + k]);  // exact
        for (size_t i = 0; i < sum_g.size(); ++i)
            sum_g[i] += res.param_grad.values[i];
    }
    // batch gradient is the sample sum; accumulation order may differ
    for (size_t i = 0; i < sum_g.size(); ++i)
        CHECK(batch_g[i] == doctest::Approx(sum_g[i]).epsilon(1e-12));
}

TEST_CASE("hidden activation matches reference tanh closely") {
    // a 1-1 net with unit weight and zero bias exposes the activation
    MlpSpec spec{{1, 1}, OutputActivation::Tanh};
    ParamVector p;
    p.spec = spec;
    p.values = {1.0, 0.0};
    auto f = [&](double x) { return nn::forward(p, std::vector<double>{x})[0]; };

    CHECK(f(0.0) == 0.0);
    CHECK(f(25.0) == 1.0);
    CHECK(f(-25.0) == -1.0);
    for (int i = 0; i <= 20000; ++i) {
        const double x = -10.0 + i * (20.0 / 20000.0);
        CHECK(std::fabs(f(x) - std::tanh(x)) < 1e-13);
        CHECK(f(-x) == -f(x));
    }
    // denormal-scale and near-saturation inputs
    for (double x : {1e-300, 1e-17, 0.5e-8, 17.9, 19.06, 22.0, 1e9}) {
        CHECK(std::fabs(f(x) - std::tanh(x)) < 1e-13);
        CHECK(std::fabs(f(x)) <= 1.0);
    }
}

TEST_CASE("backward matches central finite differences") {
    RngStream rng(29);
    for (const auto& spec : {MlpSpec{{4, 5, 3}, OutputActivation::Tanh},
                             MlpSpec{{3, 6, 6, 1}, OutputActivation::Linear}}) {
        ParamVector p = random_net(spec, 55);
        std::vector<double> x(spec.layers.front());
        for (double& v : x) v = rng.uniform(-1.5, 1.5);
        std::vector<double> c(spec.layers.back());
        for (double& v : c) v = rng.uniform(-1.0, 1.0);

        auto res = nn::backward(p, x, c);
        const double h = 1e-5;

        for (size_t i = 0; i < p.values.size(); ++i) {
            ParamVector pp = p, pm = p;
            pp.values[i] += h;
            pm.values[i] -= h;
            double num = (loss(pp, x, c) - loss(pm, x, c)) / (2.0 * h);
            double a = res.param_grad.values[i];
            double denom = std::max(1e-6, std::fabs(a) + std::fabs(num));
            CHECK(std::fabs(a - num) / denom < 1e-4);
        }
        for (size_t i = 0; i < x.size(); ++i) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double num = (loss(p, xp, c) - loss(p, xm, c)) / (2.0 * h);
            double a = res.input_grad[i];
            double denom = std::max(1e-6, std::fabs(a) + std::fabs(num));
            CHECK(std::fabs(a - num) / denom < 1e-4);
        }
    }
}

TEST_CASE("workspace backward accumulates across calls") {
    MlpSpec spec{{5, 8, 2}, OutputActivation::Tanh};
    ParamVector p = random_net(spec, 91);
    RngStream rng(92);
    std::vector<double> x1(5), x2(5), c1(2), c2(2);
    for (double* v : {x1.data(), x2.data()})
        for (int i = 0; i < 5; ++i) v[i] = rng.uniform(-1, 1);
    for (double* v : {c1.data(), c2.data()})
        for (int i = 0; i < 2; ++i) v[i] = rng.uniform(-1, 1);

    auto g1 = nn::backward(p, x1, c1);
    auto g2 = nn::backward(p, x2, c2);

    nn::Workspace ws;
    std::vector<double> acc(spec.param_count(), 0.0);
    std::vector<double> ig(5, 0.0);
    nn::forward_ws(p, x1, ws);
    nn::backward_ws(p, c1, ws, acc, ig);
    for (size_t i = 0; i < ig.size(); ++i)
        CHECK(ig[i] == doctest::Approx(g1.input_grad[i]).epsilon(1e-12));
    nn::forward_ws(p, x2, ws);
    nn::backward_ws(p, c2, ws, acc, {});

    for (size_t i = 0; i < acc.size(); ++i) {
        double want = g1.param_grad.values[i] + g2.param_grad.values[i];
        CHECK(acc[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adam matches a textbook reference trace") {
    MlpSpec spec{{2, 3, 1}, OutputActivation::Linear};
    ParamVector p = random_net(spec, 5);
    std::vector<double> ref = p.values;

    nn::AdamState st = nn::make_adam_state(spec);
    nn::AdamConfig cfg;
    cfg.lr = 0.01;

    std::vector<double> m(ref.size(), 0.0), v(ref.size(), 0.0);
    RngStream rng(6);
    for (int t = 1; t <= 3; ++t) {
        nn::Gradient g;
        g.values.resize(ref.size());
        for (double& gv : g.values) gv = rng.uniform(-1.0, 1.0);

        nn::adam_step(p, g, st, cfg);

        for (size_t i = 0; i < ref.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g.values[i];
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g.values[i] * g.values[i];
            double mhat = m[i] / (1 - std::pow(cfg.beta1, t));
            double vhat = v[i] / (1 - std::pow(cfg.beta2, t));
            ref[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(p.values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    CHECK(st.step_count == 3);
}

TEST_CASE("adam rejects non-finite gradients without touching state") {
    MlpSpec spec{{2, 2}, OutputActivation::Linear};
    RngStream rng(8);
    ParamVector p = nn::init_params(spec, rng);
    std::vector<double> before = p.values;
    nn::AdamState st = nn::make_adam_state(spec);
    nn::Gradient g;
    g.values.assign(spec.param_count(), 0.1);
    g.values[3] = std::nan("");
    CHECK_THROWS_AS(nn::adam_step(p, g, st, nn::AdamConfig{}), std::runtime_error);
    CHECK(p.values == before);
    CHECK(st.step_count == 0);
    for (double mv : st.m) CHECK(mv == 0.0);
}

TEST_CASE("gradient descent fits a small target") {
    MlpSpec spec{{2, 16, 1}, OutputActivation::Linear};
    RngStream rng(13);
    ParamVector p = nn::init_params(spec, rng);
    nn::AdamState st = nn::make_adam_state(spec);
    nn::AdamConfig cfg;
    cfg.lr = 0.01;

    // fit f(x, y) = x * y on a fixed batch
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (int i = 0; i < 32; ++i) {
        xs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        ys.push_back(xs.back()[0] * xs.back()[1]);
    }
    auto batch_loss = [&](const ParamVector& q) {
        double s = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            double e = nn::forward(q, xs[i])[0] - ys[i];
            s += e * e;
        }
        return s / xs.size();
    };
    double l0 = batch_loss(p);
    nn::Workspace ws;
    for (int it = 0; it < 500; ++it) {
        nn::Gradient g;
        g.values.assign(spec.param_count(), 0.0);
        for (size_t i = 0; i < xs.size(); ++i) {
            auto out = nn::forward_ws(p, xs[i], ws);
            double og = 2.0 * (out[0] - ys[i]) / xs.size();
            nn::backward_ws(p, std::vector<double>{og}, ws, g.values, {});
        }
        nn::adam_step(p, g, st, cfg);
    }
    CHECK(batch_loss(p) < l0 / 100.0);
}

TEST_CASE("init respects fan-in bounds and scales the output layer") {
    MlpSpec spec{{10, 16, 2}, OutputActivation::Tanh};
    RngStream r1(99), r2(99), r3(100);
    ParamVector a = nn::init_params(spec, r1);
    ParamVector b = nn::init_params(spec, r2);
    ParamVector c = nn::init_params(spec, r3);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);

    const int first_block = (10 + 1) * 16;
    double max_first = 0.0, max_last = 0.0;
    for (int i = 0; i < first_block; ++i)
        max_first = std::max(max_first, std::fabs(a.values[i]));
    for (size_t i = first_block; i < a.values.size(); ++i)
        max_last = std::max(max_last, std::fabs(a.values[i]));
    CHECK(max_first <= 1.0 / std::sqrt(10.0));
    CHECK(max_first > 0.1);  // not degenerate
    CHECK(max_last <= 0.01 / std::sqrt(16.0));
    CHECK(max_last > 0.0);
}

TEST_CASE("parameter files round-trip exactly") {
    MlpSpec spec{{4, 5, 3}, OutputActivation::Tanh};
    ParamVector p = random_net(spec, 41);
    auto path = std::filesystem::path("roundtrip_params.bin");
    nn::save_params(p, path);

    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "mlp 4,5,3 tanh");
    in.close();

    ParamVector q = nn::load_params(path);
    CHECK(q.spec == p.spec);
    REQUIRE(q.values.size() == p.values.size());
    for (size_t i = 0; i < p.values.size(); ++i) CHECK(q.values[i] == p.values[i]);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(nn::load_params("does_not_exist.bin"), std::runtime_error);
}

TEST_CASE("spec validation and shape checks") {
    MlpSpec bad1{{5}, OutputActivation::Linear};
    CHECK_THROWS_AS(bad1.validate(), std::invalid_argument);
    MlpSpec bad2{{5, 0, 2}, OutputActivation::Linear};
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);

    MlpSpec spec{{3, 4, 2}, OutputActivation::Tanh};
    ParamVector p = random_net(spec, 2);
    CHECK_THROWS_AS(nn::forward(p, std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
    ParamVector broken = p;
    broken.values.pop_back();
    CHECK_THROWS_AS(nn::forward(broken, std::vector<double>{1, 2, 3}),
                    std::invalid_argument);

    // tanh head equals tanh of the linear head with identical parameters
    ParamVector lin = p;
    lin.spec.output = OutputActivation::Linear;
    std::vector<double> x{0.3, -0.8, 1.1};
    auto yt = nn::forward(p, x);
    auto yl = nn::forward(lin, x);
    for (size_t j = 0; j < yt.size(); ++j)
        CHECK(yt[j] == doctest::Approx(std::tanh(yl[j])).epsilon(1e-12));
}
