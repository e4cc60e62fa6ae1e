#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flq/core/parallel.hpp"
#include "flq/latent.hpp"

namespace flq::eval {

using Row = std::array<double, kLatentDim>;

inline double squared_distance(const Row& a, const Row& b) {
    double s = 0.0;
    for (int d = 0; d < kLatentDim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

// Mean over samples of the minimum Euclidean distance to any reference row.
inline double avg_min_distance(std::span<const Row> samples, std::span<const Row> reference) {
    if (samples.empty() || reference.empty())
        throw std::invalid_argument("avg_min_distance: empty input");
    std::vector<double> mins(samples.size());
    parallel_for(samples.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& r : reference) best = std::min(best, squared_distance(samples[i], r));
            mins[i] = std::sqrt(best);
        }
    });
    double sum = 0.0;
    for (double v : mins) sum += v;
    return sum / double(samples.size());
}

// Per-reference minimum distance to the given model's samples.
inline std::vector<double> min_distances_to_samples(std::span<const Row> samples,
                                                    std::span<const Row> reference) {
    if (samples.empty() || reference.empty())
        throw std::invalid_argument("min_distances_to_samples: empty input");
    std::vector<double> mins(reference.size());
    parallel_for(reference.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : samples) best = std::min(best, squared_distance(reference[i], s));
            mins[i] = std::sqrt(best);
        }
    });
    return mins;
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts; // 64 equal-width bins over [lo, hi]
};

inline constexpr int kHistogramBins = 64;

// Fixed bin policy: equal-width bins over the pooled range so per-model
// histograms stay comparable.
inline Histogram histogram_over_range(std::span<const double> values, double lo, double hi) {
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(kHistogramBins, 0);
    const double width = hi > lo ? (hi - lo) / kHistogramBins : 1.0;
    for (double v : values) {
        int b = int((v - lo) / width);
        if (b < 0) b = 0;
        if (b >= kHistogramBins) b = kHistogramBins - 1;
        ++h.counts[std::size_t(b)];
    }
    return h;
}

struct NearestNeighborCounts {
    std::vector<std::size_t> wins; // per model, canonical order
    std::size_t ties = 0;
};

// For each reference row, attribute the globally nearest generated sample to
// its model. Exact cross-model ties go to the first model in canonical order
// and are tallied.
inline NearestNeighborCounts
nearest_neighbor_counts(std::span<const std::span<const Row>> sample_sets,
                        std::span<const Row> reference) {
    if (sample_sets.empty()) throw std::invalid_argument("nearest_neighbor_counts: no sample sets");
    const std::size_t n_models = sample_sets.size();
    NearestNeighborCounts out;
    out.wins.assign(n_models, 0);
    std::vector<std::size_t> winners(reference.size());
    std::vector<std::uint8_t> tied(reference.size(), 0);
    parallel_for(reference.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::vector<double> model_min(n_models, std::numeric_limits<double>::infinity());
            for (std::size_t m = 0; m < n_models; ++m)
                for (const auto& s : sample_sets[m])
                    model_min[m] = std::min(model_min[m], squared_distance(reference[i], s));
            double best = model_min[0];
            for (std::size_t m = 1; m < n_models; ++m) best = std::min(best, model_min[m]);
            std::size_t achieving = 0;
            std::size_t winner = 0;
            for (std::size_t m = n_models; m > 0; --m) {
                if (model_min[m - 1] == best) {
                    winner = m - 1; // lowest index achieving the minimum wins
                    ++achieving;
                }
            }
            winners[i] = winner;
            tied[i] = achieving > 1 ? 1 : 0;
        }
    });
    for (std::size_t i = 0; i < reference.size(); ++i) {
        ++out.wins[winners[i]];
        if (tied[i]) ++out.ties;
    }
    return out;
}

} // namespace flq::eval
