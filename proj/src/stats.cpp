#include "bpm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bpm/rng.hpp"

namespace bpm::stats {

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Interval bootstrap_ci(const std::vector<double>& values, int resamples,
                      double confidence, std::uint64_t seed) {
    if (values.empty())
        throw std::invalid_argument("bootstrap of empty set");
    if (resamples < 1)
        throw std::invalid_argument("resamples must be >= 1");
    if (!(confidence > 0.0) || confidence >= 1.0)
        throw std::invalid_argument("confidence must be in (0, 1)");

    RngStream rng(seed);
    const std::size_t n = values.size();
    std::vector<double> medians(resamples);
    std::vector<double> draw(n);
    for (int r = 0; r < resamples; ++r) {
        for (std::size_t i = 0; i < n; ++i) draw[i] = values[rng.index(n)];
        medians[r] = median(draw);
    }
    std::sort(medians.begin(), medians.end());
    const double alpha = 1.0 - confidence;
    const auto lo_idx = static_cast<std::size_t>(
        std::floor(alpha / 2.0 * (resamples - 1)));
    const auto hi_idx = static_cast<std::size_t>(
        std::ceil((1.0 - alpha / 2.0) * (resamples - 1)));
    return {medians[lo_idx], medians[hi_idx]};
}

std::vector<double> rolling_success(const std::vector<int>& success,
                                    int window) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    std::vector<double> out(success.size());
    long running = 0;
    for (std::size_t i = 0; i < success.size(); ++i) {
        running += success[i];
        if (i >= static_cast<std::size_t>(window)) running -= success[i - window];
        const std::size_t len = std::min<std::size_t>(i + 1, window);
        out[i] = static_cast<double>(running) / static_cast<double>(len);
    }
    return out;
}

int episodes_to_threshold(const std::vector<int>& success, int window,
                          double threshold) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    long running = 0;
    for (std::size_t i = 0; i < success.size(); ++i) {
        running += success[i];
        if (i >= static_cast<std::size_t>(window)) running -= success[i - window];
        if (i + 1 >= static_cast<std::size_t>(window) &&
            static_cast<double>(running) / window >= threshold)
            return static_cast<int>(i);
    }
    return static_cast<int>(success.size()) + 1;
}

double eval_success_rate(const train::LearningCurve& curve, int window) {
    const std::size_t n = curve.episodes.size();
    if (window < 1 || static_cast<std::size_t>(window) > n)
        throw std::invalid_argument("window exceeds the curve");
    int evals = 0, hits = 0;
    for (std::size_t i = n - window; i < n; ++i) {
        if (!curve.episodes[i].eval) continue;
        ++evals;
        hits += curve.episodes[i].success;
    }
    if (evals == 0)
        throw std::invalid_argument("no evaluation episodes in the window");
    return static_cast<double>(hits) / static_cast<double>(evals);
}

}  // namespace bpm::stats
