#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flq/core/csv.hpp"
#include "flq/core/errors.hpp"
#include "flq/eval/metrics.hpp"
#include "flq/eval/pca.hpp"
#include "flq/eval/tsne.hpp"

namespace flq::eval {

struct ModelEval {
    std::string tag;
    double avg_min = 0.0;
    std::size_t nn_wins = 0;
    std::vector<double> min_distances; // per reference row
    Histogram histogram;
};

struct MetricsReport {
    std::vector<ModelEval> models; // canonical order: qcbm, qgan, lstm
    std::size_t ties = 0;
    std::size_t reference_count = 0;
    ad::Tensor pca_coords;  // [total samples x 2]
    std::vector<double> pca_explained_ratio;
    ad::Tensor tsne_coords; // [total samples x 2]
    std::vector<int> point_labels; // model index per embedded point
    std::vector<std::pair<int, double>> tsne_kl_log;
};

struct SampleSet {
    std::string tag;
    std::vector<Row> rows;
};

// Distance metrics, nearest-neighbor attribution and both embeddings over
// the concatenated sample sets.
inline MetricsReport build_report(std::span<const Row> reference,
                                  std::span<const SampleSet> sets, const TsneOptions& tsne_opt,
                                  bool run_tsne = true) {
    if (sets.empty()) throw std::invalid_argument("build_report: no sample sets");
    MetricsReport report;
    report.reference_count = reference.size();

    std::vector<std::span<const Row>> spans;
    for (const auto& s : sets) spans.emplace_back(s.rows);
    const auto nn = nearest_neighbor_counts(spans, reference);
    report.ties = nn.ties;

    double pooled_lo = std::numeric_limits<double>::infinity();
    double pooled_hi = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < sets.size(); ++m) {
        ModelEval me;
        me.tag = sets[m].tag;
        me.avg_min = avg_min_distance(sets[m].rows, reference);
        me.nn_wins = nn.wins[m];
        me.min_distances = min_distances_to_samples(sets[m].rows, reference);
        for (double v : me.min_distances) {
            pooled_lo = std::min(pooled_lo, v);
            pooled_hi = std::max(pooled_hi, v);
        }
        report.models.push_back(std::move(me));
    }
    for (auto& me : report.models)
        me.histogram = histogram_over_range(me.min_distances, pooled_lo, pooled_hi);

    std::size_t total = 0;
    for (const auto& s : sets) total += s.rows.size();
    ad::Tensor combined({total, std::size_t(kLatentDim)});
    std::size_t r = 0;
    for (std::size_t m = 0; m < sets.size(); ++m)
        for (const auto& row : sets[m].rows) {
            for (int d = 0; d < kLatentDim; ++d) combined.data[r * kLatentDim + d] = row[d];
            report.point_labels.push_back(int(m));
            ++r;
        }

    const auto pca = pca_fit_project(combined, 2);
    report.pca_coords = pca.coords;
    report.pca_explained_ratio = pca.explained_ratio;

    if (run_tsne) {
        auto tr = tsne_embed(combined, tsne_opt);
        report.tsne_coords = std::move(tr.coords);
        report.tsne_kl_log = std::move(tr.kl_log);
    }
    return report;
}

// --- CSV emission ---

inline void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::string out = "model,avg_min_distance,nn_wins,nn_ties\n";
    for (const auto& m : report.models)
        out += m.tag + "," + format_double(m.avg_min) + "," + std::to_string(m.nn_wins) + "," +
               std::to_string(report.ties) + "\n";
    write_text_file(path, out);
}

struct MetricsRow {
    std::string tag;
    double avg_min = 0.0;
    std::size_t nn_wins = 0;
    std::size_t ties = 0;
};

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& path) {
    const auto rows = read_csv(path);
    std::vector<MetricsRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 4) throw IoError("metrics csv: bad row in " + path);
        out.push_back({rows[i][0], parse_double(rows[i][1]),
                       std::size_t(parse_double(rows[i][2])), std::size_t(parse_double(rows[i][3]))});
    }
    return out;
}

inline void write_embedding_csv(const ad::Tensor& coords, const std::vector<int>& labels,
                                std::span<const ModelEval> models, const std::string& path) {
    std::string out = "model,x,y\n";
    for (std::size_t i = 0; i < coords.shape[0]; ++i)
        out += models[std::size_t(labels[i])].tag + "," + format_double(coords.data[i * 2]) +
               "," + format_double(coords.data[i * 2 + 1]) + "\n";
    write_text_file(path, out);
}

// --- SVG emission (numeric values carried as data-* attributes) ---

namespace svg {

inline const char* model_color(std::size_t m) {
    static const char* colors[] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd"};
    return colors[m % 4];
}

inline std::string header(int w, int h, const std::string& title) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " +
           std::to_string(w) + " " + std::to_string(h) + "\">\n<title>" + title + "</title>\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline void scatter(const std::string& path, const ad::Tensor& coords,
                    const std::vector<int>& labels, std::span<const ModelEval> models,
                    const std::string& title) {
    const int W = 720, H = 560, pad = 50;
    double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
    if (coords.shape[0] > 0) {
        lo_x = hi_x = coords.data[0];
        lo_y = hi_y = coords.data[1];
        for (std::size_t i = 0; i < coords.shape[0]; ++i) {
            lo_x = std::min(lo_x, coords.data[i * 2]);
            hi_x = std::max(hi_x, coords.data[i * 2]);
            lo_y = std::min(lo_y, coords.data[i * 2 + 1]);
            hi_y = std::max(hi_y, coords.data[i * 2 + 1]);
        }
    }
    const double sx = (W - 2 * pad) / std::max(hi_x - lo_x, 1e-12);
    const double sy = (H - 2 * pad) / std::max(hi_y - lo_y, 1e-12);
    std::string out = header(W, H, title);
    out += "<text x=\"" + std::to_string(W / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
        out += "<circle cx=\"" + std::to_string(pad + 12) + "\" cy=\"" +
               std::to_string(40 + 18 * int(m)) + "\" r=\"5\" fill=\"" + model_color(m) +
               "\"/><text x=\"" + std::to_string(pad + 24) + "\" y=\"" +
               std::to_string(45 + 18 * int(m)) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + models[m].tag + "</text>\n";
    }
    for (std::size_t i = 0; i < coords.shape[0]; ++i) {
        const double x = pad + (coords.data[i * 2] - lo_x) * sx;
        const double y = H - pad - (coords.data[i * 2 + 1] - lo_y) * sy;
        const std::size_t m = std::size_t(labels[i]);
        out += "<circle cx=\"" + format_double(x) + "\" cy=\"" + format_double(y) +
               "\" r=\"2\" fill=\"" + model_color(m) + "\" fill-opacity=\"0.55\" data-model=\"" +
               models[m].tag + "\"/>\n";
    }
    out += "</svg>\n";
    write_text_file(path, out);
}

inline void bars(const std::string& path, std::span<const ModelEval> models,
                 const std::vector<double>& values, const std::string& title,
                 const std::string& value_name) {
    const int W = 520, H = 420, pad = 60;
    double hi = 1e-12;
    for (double v : values) hi = std::max(hi, v);
    std::string out = header(W, H, title);
    out += "<text x=\"" + std::to_string(W / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
    const double bw = double(W - 2 * pad) / double(values.size());
    for (std::size_t m = 0; m < values.size(); ++m) {
        const double bh = (H - 2 * pad) * values[m] / hi;
        const double x = pad + bw * double(m) + bw * 0.15;
        const double y = H - pad - bh;
        out += "<rect x=\"" + format_double(x) + "\" y=\"" + format_double(y) + "\" width=\"" +
               format_double(bw * 0.7) + "\" height=\"" + format_double(bh) + "\" fill=\"" +
               model_color(m) + "\" data-model=\"" + models[m].tag + "\" data-name=\"" +
               value_name + "\" data-value=\"" + format_double(values[m]) + "\"/>\n";
        out += "<text x=\"" + format_double(x + bw * 0.35) + "\" y=\"" +
               std::to_string(H - pad + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
               models[m].tag + "</text>\n";
        out += "<text x=\"" + format_double(x + bw * 0.35) + "\" y=\"" + format_double(y - 6) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_double(values[m]).substr(0, 7) + "</text>\n";
    }
    out += "<line x1=\"" + std::to_string(pad) + "\" y1=\"" + std::to_string(H - pad) +
           "\" x2=\"" + std::to_string(W - pad) + "\" y2=\"" + std::to_string(H - pad) +
           "\" stroke=\"black\"/>\n</svg>\n";
    write_text_file(path, out);
}

inline void histograms(const std::string& path, std::span<const ModelEval> models,
                       const std::string& title) {
    const int W = 720, H = 440, pad = 55;
    std::size_t hi_count = 1;
    for (const auto& m : models)
        for (auto c : m.histogram.counts) hi_count = std::max(hi_count, c);
    const double lo = models.empty() ? 0.0 : models[0].histogram.lo;
    const double range = models.empty() ? 1.0 : std::max(models[0].histogram.hi - lo, 1e-12);
    std::string out = header(W, H, title);
    out += "<text x=\"" + std::to_string(W / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
        const auto& h = models[m].histogram;
        std::string points;
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double x0 = pad + (W - 2 * pad) * double(b) / double(h.counts.size());
            const double x1 = pad + (W - 2 * pad) * double(b + 1) / double(h.counts.size());
            const double y = H - pad - (H - 2 * pad) * double(h.counts[b]) / double(hi_count);
            points += format_double(x0) + "," + format_double(y) + " " + format_double(x1) +
                      "," + format_double(y) + " ";
        }
        out += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + model_color(m) +
               "\" stroke-width=\"1.5\" data-model=\"" + models[m].tag + "\"/>\n";
        out += "<text x=\"" + std::to_string(pad + 8) + "\" y=\"" +
               std::to_string(42 + 16 * int(m)) + "\" font-family=\"sans-serif\" "
               "font-size=\"12\" fill=\"" + model_color(m) + "\">" + models[m].tag + "</text>\n";
    }
    out += "<line x1=\"" + std::to_string(pad) + "\" y1=\"" + std::to_string(H - pad) +
           "\" x2=\"" + std::to_string(W - pad) + "\" y2=\"" + std::to_string(H - pad) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + std::to_string(pad) + "\" y=\"" + std::to_string(H - pad + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(lo).substr(0, 7) +
           "</text>\n";
    out += "<text x=\"" + std::to_string(W - pad) + "\" y=\"" + std::to_string(H - pad + 18) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_double(lo + range).substr(0, 7) + "</text>\n</svg>\n";
    write_text_file(path, out);
}

} // namespace svg

// Writes the metric CSVs for the report into `dir`.
inline void emit_report_csvs(const MetricsReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("emit_report: cannot create directory " + dir);
    auto in_dir = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    write_metrics_csv(report, in_dir("metrics.csv"));
    for (const auto& m : report.models) {
        std::string out = "reference_index,distance\n";
        for (std::size_t i = 0; i < m.min_distances.size(); ++i)
            out += std::to_string(i) + "," + format_double(m.min_distances[i]) + "\n";
        write_text_file(in_dir("min_distances_" + m.tag + ".csv"), out);
    }
    {
        std::string out = "bin_lo,bin_hi";
        for (const auto& m : report.models) out += "," + m.tag;
        out += "\n";
        if (!report.models.empty()) {
            const auto& h0 = report.models[0].histogram;
            const double width = (h0.hi - h0.lo) / double(kHistogramBins);
            for (int b = 0; b < kHistogramBins; ++b) {
                out += format_double(h0.lo + width * b) + "," +
                       format_double(h0.lo + width * (b + 1));
                for (const auto& m : report.models)
                    out += "," + std::to_string(m.histogram.counts[std::size_t(b)]);
                out += "\n";
            }
        }
        write_text_file(in_dir("distance_histogram.csv"), out);
    }
    write_embedding_csv(report.pca_coords, report.point_labels, report.models, in_dir("pca.csv"));
    if (report.tsne_coords.size() > 0)
        write_embedding_csv(report.tsne_coords, report.point_labels, report.models,
                            in_dir("tsne.csv"));
    {
        std::string out = "iteration,kl\n";
        for (auto [it, kl] : report.tsne_kl_log)
            out += std::to_string(it) + "," + format_double(kl) + "\n";
        write_text_file(in_dir("tsne_kl.csv"), out);
    }
}

// Renders the SVG plots for the report into `dir`.
inline void emit_report_plots(const MetricsReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    auto in_dir = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

    std::vector<double> avg_mins, wins;
    for (const auto& m : report.models) {
        avg_mins.push_back(m.avg_min);
        wins.push_back(double(m.nn_wins));
    }
    svg::bars(in_dir("avg_min_distance.svg"), report.models, avg_mins,
              "Average minimum distance to reference latents", "avg_min_distance");
    svg::bars(in_dir("nn_counts.svg"), report.models, wins,
              "Nearest-neighbor wins per model", "nn_wins");
    svg::histograms(in_dir("distance_histogram.svg"), report.models,
                    "Distribution of per-reference minimum distances");
    svg::scatter(in_dir("pca.svg"), report.pca_coords, report.point_labels, report.models,
                 "PCA projection of generated samples");
    if (report.tsne_coords.size() > 0)
        svg::scatter(in_dir("tsne.svg"), report.tsne_coords, report.point_labels, report.models,
                     "t-SNE embedding of generated samples");
}

inline void emit_report(const MetricsReport& report, const std::string& dir) {
    emit_report_csvs(report, dir);
    emit_report_plots(report, dir);
}

// Rebuilds a report from previously emitted CSVs (plots re-render without
// recomputing metrics or embeddings).
inline MetricsReport load_report(const std::string& dir) {
    namespace fs = std::filesystem;
    auto in_dir = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
    MetricsReport report;
    for (const auto& row : parse_metrics_csv(in_dir("metrics.csv"))) {
        ModelEval m;
        m.tag = row.tag;
        m.avg_min = row.avg_min;
        m.nn_wins = row.nn_wins;
        report.ties = row.ties;
        report.models.push_back(std::move(m));
    }
    for (auto& m : report.models) {
        const auto rows = read_csv(in_dir("min_distances_" + m.tag + ".csv"));
        for (std::size_t i = 1; i < rows.size(); ++i)
            m.min_distances.push_back(parse_double(rows[i][1]));
        report.reference_count = m.min_distances.size();
    }
    {
        const auto rows = read_csv(in_dir("distance_histogram.csv"));
        for (std::size_t mi = 0; mi < report.models.size(); ++mi) {
            auto& h = report.models[mi].histogram;
            h.counts.clear();
            for (std::size_t i = 1; i < rows.size(); ++i)
                h.counts.push_back(std::size_t(parse_double(rows[i][2 + mi])));
            if (rows.size() > 1) {
                h.lo = parse_double(rows[1][0]);
                h.hi = parse_double(rows.back()[1]);
            }
        }
    }
    auto load_coords = [&](const std::string& name, ad::Tensor& coords,
                           std::vector<int>& labels) {
        if (!fs::exists(in_dir(name))) return;
        const auto rows = read_csv(in_dir(name));
        if (rows.size() <= 1) return;
        coords = ad::Tensor({rows.size() - 1, 2});
        labels.clear();
        for (std::size_t i = 1; i < rows.size(); ++i) {
            int label = 0;
            for (std::size_t m = 0; m < report.models.size(); ++m)
                if (report.models[m].tag == rows[i][0]) label = int(m);
            labels.push_back(label);
            coords.data[(i - 1) * 2] = parse_double(rows[i][1]);
            coords.data[(i - 1) * 2 + 1] = parse_double(rows[i][2]);
        }
    };
    std::vector<int> pca_labels, tsne_labels;
    load_coords("pca.csv", report.pca_coords, pca_labels);
    load_coords("tsne.csv", report.tsne_coords, tsne_labels);
    report.point_labels = pca_labels.empty() ? tsne_labels : pca_labels;
    return report;
}

} // namespace flq::eval
