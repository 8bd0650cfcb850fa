#pragma once
#include <cstdint>
#include <vector>

#include "bpm/train.hpp"

namespace bpm::stats {

// Median of a copy; even sizes average the two central order statistics.
// Throws std::invalid_argument on an empty input.
double median(std::vector<double> values);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap of the median. Resample r = 0..resamples-1 draws
// values.size() indices in order from RngStream(seed) via index(); the
// interval takes the floor(alpha/2*(R-1)) and ceil((1-alpha/2)*(R-1)) order
// statistics of the resampled medians, alpha = 1-confidence. The drawing
// order is part of the contract so an independent implementation seeded the
// same way lands on the same resamples.
Interval bootstrap_ci(const std::vector<double>& values, int resamples,
                      double confidence, std::uint64_t seed);

// Trailing-window mean of 0/1 success flags; entry i averages episodes
// max(0, i-window+1)..i, so entries before a full window use the prefix.
std::vector<double> rolling_success(const std::vector<int>& success,
                                    int window);

// First episode index whose trailing window is complete (i >= window-1) and
// whose rolling success reaches the threshold; success.size() + 1 when never
// reached, a sentinel ordering unreached runs worse than any reached one.
// Partial windows are excluded so one lucky early episode cannot count as
// task recovery.
int episodes_to_threshold(const std::vector<int>& success, int window,
                          double threshold);

// Mean success over evaluation-flagged episodes within the final `window`
// episodes. Throws std::invalid_argument if the window exceeds the curve or
// contains no evaluation episodes.
double eval_success_rate(const train::LearningCurve& curve, int window);

}  // namespace bpm::stats
