#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "flq/core/rng.hpp"
#include "flq/eval/metrics.hpp"
#include "flq/eval/pca.hpp"
#include "flq/eval/report.hpp"
#include "flq/eval/tsne.hpp"

using namespace flq;
using namespace flq::eval;

namespace {

std::vector<Row> random_rows(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<Row> rows(n);
    for (auto& r : rows)
        for (auto& v : r) v = rng.normal() * scale;
    return rows;
}

double naive_min_distance(const Row& a, const std::vector<Row>& pool) {
    double best = 1e300;
    for (const auto& p : pool) {
        double d = 0.0;
        for (int c = 0; c < kLatentDim; ++c) d += (a[std::size_t(c)] - p[std::size_t(c)]) * (a[std::size_t(c)] - p[std::size_t(c)]);
        best = std::min(best, d);
    }
    return std::sqrt(best);
}

// Minimal well-formedness scan: tags balance, attributes are quoted.
bool svg_well_formed(const std::string& path) {
    std::ifstream in(path);
    if (!in) return false;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::string> stack;
    std::size_t pos = 0;
    bool seen_decl = false;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        const std::size_t end = text.find('>', pos);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?') {
            seen_decl = true;
            continue;
        }
        if (tag[0] == '!') continue;
        const bool closing = tag[0] == '/';
        const bool self_closing = tag.back() == '/';
        std::string name = tag.substr(closing ? 1 : 0);
        const std::size_t sp = name.find_first_of(" \t\n");
        if (sp != std::string::npos) name = name.substr(0, sp);
        // attribute quotes must balance inside the tag
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(name);
        }
    }
    return seen_decl && stack.empty();
}

} // namespace

TEST_CASE("avg_min_distance: subsets, unit pair, oracle, translation invariance") {
    Rng rng(1);
    SUBCASE("samples drawn from the reference give zero") {
        const auto ref = random_rows(30, rng);
        std::vector<Row> samples(ref.begin(), ref.begin() + 10);
        CHECK(avg_min_distance(samples, ref) == 0.0);
    }
    SUBCASE("a single unit offset gives one") {
        Row a{}, b{};
        b[0] = 1.0;
        CHECK(avg_min_distance(std::vector<Row>{a}, std::vector<Row>{b}) ==
              doctest::Approx(1.0));
    }
    SUBCASE("matches the quadratic oracle on random data") {
        const auto samples = random_rows(100, rng);
        const auto ref = random_rows(50, rng);
        double oracle = 0.0;
        for (const auto& s : samples) oracle += naive_min_distance(s, ref);
        oracle /= 100.0;
        CHECK(avg_min_distance(samples, ref) == doctest::Approx(oracle).epsilon(1e-12));
    }
    SUBCASE("translation invariance") {
        auto samples = random_rows(40, rng);
        auto ref = random_rows(25, rng);
        const double before = avg_min_distance(samples, ref);
        Row shift{};
        for (auto& v : shift) v = rng.normal();
        for (auto& s : samples)
            for (int c = 0; c < kLatentDim; ++c) s[std::size_t(c)] += shift[std::size_t(c)];
        for (auto& r : ref)
            for (int c = 0; c < kLatentDim; ++c) r[std::size_t(c)] += shift[std::size_t(c)];
        CHECK(avg_min_distance(samples, ref) == doctest::Approx(before).epsilon(1e-12));
    }
    SUBCASE("empty inputs are rejected") {
        const auto ref = random_rows(5, rng);
        CHECK_THROWS_AS(avg_min_distance(std::vector<Row>{}, ref), std::invalid_argument);
    }
}

TEST_CASE("nearest neighbor counts: totals, oracle, ties, scale covariance") {
    Rng rng(2);
    SUBCASE("a duplicating model wins every reference row") {
        const auto ref = random_rows(20, rng);
        const auto far = random_rows(15, rng, 100.0);
        std::vector<std::span<const Row>> sets = {ref, far, far};
        const auto nn = nearest_neighbor_counts(sets, ref);
        CHECK(nn.wins[0] == 20);
        CHECK(nn.wins[1] == 0);
        CHECK(nn.wins[2] == 0);
    }
    SUBCASE("counts sum to the reference size and match brute force") {
        const auto ref = random_rows(20, rng);
        const auto a = random_rows(7, rng);
        const auto b = random_rows(5, rng);
        const auto c = random_rows(9, rng);
        std::vector<std::span<const Row>> sets = {a, b, c};
        const auto nn = nearest_neighbor_counts(sets, ref);
        CHECK(nn.wins[0] + nn.wins[1] + nn.wins[2] == 20);
        std::vector<std::size_t> oracle(3, 0);
        for (const auto& r : ref) {
            const double da = naive_min_distance(r, a);
            const double db = naive_min_distance(r, b);
            const double dc = naive_min_distance(r, c);
            if (da <= db && da <= dc)
                ++oracle[0];
            else if (db <= dc)
                ++oracle[1];
            else
                ++oracle[2];
        }
        CHECK(nn.wins[0] == oracle[0]);
        CHECK(nn.wins[1] == oracle[1]);
        CHECK(nn.wins[2] == oracle[2]);
    }
    SUBCASE("exact cross-model ties go to the first model and are tallied") {
        const auto ref = random_rows(10, rng);
        std::vector<std::span<const Row>> sets = {ref, ref, ref}; // all tie at zero
        const auto nn = nearest_neighbor_counts(sets, ref);
        CHECK(nn.wins[0] == 10);
        CHECK(nn.ties == 10);
    }
    SUBCASE("scaling all inputs never changes the winners") {
        auto ref = random_rows(15, rng);
        auto a = random_rows(6, rng);
        auto b = random_rows(6, rng);
        std::vector<std::span<const Row>> sets = {a, b};
        const auto before = nearest_neighbor_counts(sets, ref);
        const double c = 3.7;
        for (auto* rows : {&ref, &a, &b})
            for (auto& r : *rows)
                for (auto& v : r) v *= c;
        std::vector<std::span<const Row>> scaled = {a, b};
        const auto after = nearest_neighbor_counts(scaled, ref);
        CHECK(before.wins == after.wins);
    }
}

TEST_CASE("min distance distribution: zeros, histogram totals, oracle") {
    Rng rng(3);
    const auto ref = random_rows(25, rng);
    SUBCASE("samples equal to the reference give all zeros") {
        const auto mins = min_distances_to_samples(ref, ref);
        for (double v : mins) CHECK(v == 0.0);
    }
    SUBCASE("per-reference values match the oracle; histogram counts sum to M") {
        const auto samples = random_rows(12, rng);
        const auto mins = min_distances_to_samples(samples, ref);
        REQUIRE(mins.size() == 25);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(mins[i] == doctest::Approx(naive_min_distance(ref[i], samples)).epsilon(1e-12));
        double lo = 1e300, hi = -1e300;
        for (double v : mins) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const auto h = histogram_over_range(mins, lo, hi);
        std::size_t total = 0;
        for (auto c : h.counts) total += c;
        CHECK(total == 25);
        CHECK(h.counts.size() == 64);
    }
}

TEST_CASE("pca: rank-1 data, orthonormal components, eigensolver oracle") {
    Rng rng(4);
    SUBCASE("points on a line are explained by one component") {
        ad::Tensor data({60, 7});
        Row dir{};
        for (auto& v : dir) v = rng.normal();
        for (std::size_t i = 0; i < 60; ++i) {
            const double t = rng.normal();
            for (int c = 0; c < kLatentDim; ++c) data.data[i * 7 + std::size_t(c)] = t * dir[std::size_t(c)];
        }
        const auto res = pca_fit_project(data, 2);
        CHECK(res.explained_ratio[0] > 0.9999);
        CHECK(res.reduced); // the second direction is numerically empty
    }
    SUBCASE("components are orthonormal with a deterministic sign") {
        ad::Tensor data({80, 7});
        for (auto& v : data.data) v = rng.normal();
        const auto res = pca_fit_project(data, 2);
        REQUIRE(res.components.shape[0] == 2);
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
                double dot = 0.0;
                for (int c = 0; c < kLatentDim; ++c)
                    dot += res.components.data[a * 7 + std::size_t(c)] * res.components.data[b * 7 + std::size_t(c)];
                CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
            }
        for (std::size_t a = 0; a < 2; ++a) {
            std::size_t mj = 0;
            for (std::size_t c = 1; c < 7; ++c)
                if (std::abs(res.components.data[a * 7 + c]) >
                    std::abs(res.components.data[a * 7 + mj]))
                    mj = c;
            CHECK(res.components.data[a * 7 + mj] > 0.0);
        }
    }
    SUBCASE("matches a power-iteration oracle up to sign") {
        ad::Tensor data({120, 7});
        for (auto& v : data.data) v = rng.normal();
        // stretch two directions so the spectrum is well separated
        for (std::size_t i = 0; i < 120; ++i) {
            data.data[i * 7 + 0] *= 3.0;
            data.data[i * 7 + 3] *= 2.0;
        }
        const auto res = pca_fit_project(data, 2);

        // Oracle: power iteration with deflation on the covariance matrix.
        std::vector<double> mean(7, 0.0);
        for (std::size_t i = 0; i < 120; ++i)
            for (int c = 0; c < 7; ++c) mean[std::size_t(c)] += data.data[i * 7 + std::size_t(c)];
        for (auto& m : mean) m /= 120.0;
        std::vector<double> cov(49, 0.0);
        for (std::size_t i = 0; i < 120; ++i)
            for (int p = 0; p < 7; ++p)
                for (int q = 0; q < 7; ++q)
                    cov[std::size_t(p) * 7 + std::size_t(q)] += (data.data[i * 7 + std::size_t(p)] - mean[std::size_t(p)]) *
                                      (data.data[i * 7 + std::size_t(q)] - mean[std::size_t(q)]) / 119.0;
        auto power_iterate = [&](const std::vector<double>& m) {
            std::vector<double> v(7, 1.0);
            double lambda = 0.0;
            for (int it = 0; it < 5000; ++it) {
                std::vector<double> w(7, 0.0);
                for (int p = 0; p < 7; ++p)
                    for (int q = 0; q < 7; ++q) w[std::size_t(p)] += m[std::size_t(p) * 7 + std::size_t(q)] * v[std::size_t(q)];
                double norm = 0.0;
                for (double x : w) norm += x * x;
                norm = std::sqrt(norm);
                for (int p = 0; p < 7; ++p) v[std::size_t(p)] = w[std::size_t(p)] / norm;
                lambda = norm;
            }
            return std::make_pair(v, lambda);
        };
        auto [v1, l1] = power_iterate(cov);
        auto deflated = cov;
        for (int p = 0; p < 7; ++p)
            for (int q = 0; q < 7; ++q) deflated[std::size_t(p) * 7 + std::size_t(q)] -= l1 * v1[std::size_t(p)] * v1[std::size_t(q)];
        auto [v2, l2] = power_iterate(deflated);

        CHECK(res.explained_variance[0] == doctest::Approx(l1).epsilon(1e-8));
        CHECK(res.explained_variance[1] == doctest::Approx(l2).epsilon(1e-8));
        double dot1 = 0.0, dot2 = 0.0;
        for (int c = 0; c < 7; ++c) {
            dot1 += res.components.data[std::size_t(c)] * v1[std::size_t(c)];
            dot2 += res.components.data[7 + std::size_t(c)] * v2[std::size_t(c)];
        }
        CHECK(std::abs(dot1) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::abs(dot2) == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("tsne: calibration, duplicates, determinism, perplexity guard") {
    Rng rng(5);
    SUBCASE("entropy calibration within 1e-4 of log(perplexity)") {
        ad::Tensor data({200, 7});
        for (auto& v : data.data) v = rng.normal();
        TsneOptions opt;
        opt.perplexity = 20.0;
        opt.iters = 50;
        opt.seed = 6;
        const auto res = tsne_embed(data, opt);
        CHECK(res.max_entropy_error < 1e-4);
    }
    SUBCASE("a duplicated point pair embeds below the 1st percentile distance") {
        ad::Tensor data({121, 7});
        for (auto& v : data.data) v = rng.normal();
        for (int c = 0; c < 7; ++c) data.data[120 * 7 + std::size_t(c)] = data.data[17 * 7 + std::size_t(c)];
        TsneOptions opt;
        opt.perplexity = 15.0;
        opt.iters = 500;
        opt.seed = 7;
        const auto res = tsne_embed(data, opt);
        auto dist = [&](std::size_t i, std::size_t j) {
            const double dx = res.coords.data[i * 2] - res.coords.data[j * 2];
            const double dy = res.coords.data[i * 2 + 1] - res.coords.data[j * 2 + 1];
            return std::sqrt(dx * dx + dy * dy);
        };
        std::vector<double> all;
        for (std::size_t i = 0; i < 121; ++i)
            for (std::size_t j = i + 1; j < 121; ++j) all.push_back(dist(i, j));
        std::sort(all.begin(), all.end());
        const double p1 = all[all.size() / 100];
        CHECK(dist(17, 120) < p1);
    }
    SUBCASE("coordinates are seed-deterministic") {
        ad::Tensor data({80, 7});
        for (auto& v : data.data) v = rng.normal();
        TsneOptions opt;
        opt.perplexity = 10.0;
        opt.iters = 120;
        opt.seed = 8;
        const auto a = tsne_embed(data, opt);
        const auto b = tsne_embed(data, opt);
        for (std::size_t i = 0; i < a.coords.size(); ++i)
            CHECK(a.coords.data[i] == b.coords.data[i]);
    }
    SUBCASE("N <= 3 * perplexity is rejected with a suggestion") {
        ad::Tensor data({30, 7});
        for (auto& v : data.data) v = rng.normal();
        TsneOptions opt;
        opt.perplexity = 10.0;
        CHECK_THROWS_WITH_AS(tsne_embed(data, opt), doctest::Contains("smaller perplexity"),
                             std::invalid_argument);
    }
}

TEST_CASE("tsne KL objective is non-increasing late in at least 95% of seeded toy runs") {
    Rng rng(9);
    int ok = 0;
    for (int seed = 0; seed < 20; ++seed) {
        ad::Tensor data({90, 7});
        for (auto& v : data.data) v = rng.normal();
        // three loose clusters
        for (std::size_t i = 0; i < 90; ++i) data.data[i * 7] += double(i % 3) * 6.0;
        TsneOptions opt;
        opt.perplexity = 12.0;
        opt.iters = 500;
        opt.log_every = 50;
        opt.seed = std::uint64_t(seed);
        const auto res = tsne_embed(data, opt);
        bool monotone = true;
        for (std::size_t k = 1; k < res.kl_log.size(); ++k) {
            if (res.kl_log[k].first <= 250) continue; // exaggeration phase
            if (res.kl_log[k].second > res.kl_log[k - 1].second + 1e-9 &&
                res.kl_log[k - 1].first > 250)
                monotone = false;
        }
        for (const auto& [it, kl] : res.kl_log) CHECK(std::isfinite(kl));
        if (monotone) ++ok;
    }
    CHECK(ok >= 19);
}

TEST_CASE("report: metrics round trip, SVG well-formedness, embedded bar values") {
    Rng rng(10);
    const auto ref = random_rows(40, rng);
    std::vector<SampleSet> sets;
    for (const char* tag : {"qcbm", "qgan", "lstm"}) {
        SampleSet s;
        s.tag = tag;
        s.rows = random_rows(40, rng);
        sets.push_back(std::move(s));
    }
    TsneOptions opt;
    opt.perplexity = 12.0;
    opt.iters = 150;
    opt.seed = 11;
    const auto report = build_report(ref, sets, opt, true);
    CHECK(report.models.size() == 3);
    CHECK(report.models[0].nn_wins + report.models[1].nn_wins + report.models[2].nn_wins == 40);

    const auto dir =
        (std::filesystem::temp_directory_path() / "flq_report_test").string();
    emit_report(report, dir);

    SUBCASE("metrics CSV round-trips exactly") {
        const auto rows = parse_metrics_csv(dir + "/metrics.csv");
        REQUIRE(rows.size() == 3);
        for (std::size_t m = 0; m < 3; ++m) {
            CHECK(rows[m].tag == report.models[m].tag);
            CHECK(rows[m].avg_min == report.models[m].avg_min);
            CHECK(rows[m].nn_wins == report.models[m].nn_wins);
            CHECK(rows[m].ties == report.ties);
        }
    }
    SUBCASE("SVG files are well-formed") {
        for (const char* f : {"avg_min_distance.svg", "nn_counts.svg",
                              "distance_histogram.svg", "pca.svg", "tsne.svg"})
            CHECK_MESSAGE(svg_well_formed(dir + "/" + f), f);
    }
    SUBCASE("bar chart data attributes carry the exact metric values") {
        std::ifstream in(dir + "/avg_min_distance.svg");
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        for (const auto& m : report.models) {
            const std::string needle = "data-model=\"" + m.tag + "\"";
            const auto at = text.find(needle);
            REQUIRE(at != std::string::npos);
            const auto vstart = text.find("data-value=\"", at) + 12;
            const auto vend = text.find('"', vstart);
            CHECK(parse_double(text.substr(vstart, vend - vstart)) == m.avg_min);
        }
    }
    SUBCASE("report reloads from CSVs for plotting") {
        const auto back = load_report(dir);
        REQUIRE(back.models.size() == 3);
        for (std::size_t m = 0; m < 3; ++m) {
            CHECK(back.models[m].avg_min == report.models[m].avg_min);
            CHECK(back.models[m].nn_wins == report.models[m].nn_wins);
            CHECK(back.models[m].min_distances == report.models[m].min_distances);
            CHECK(back.models[m].histogram.counts == report.models[m].histogram.counts);
        }
        CHECK(back.tsne_coords.size() == report.tsne_coords.size());
    }
    std::filesystem::remove_all(dir);
}
