#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "flq/core/csv.hpp"
#include "flq/core/errors.hpp"

namespace flq {

inline constexpr int kLatentDim = 7;

// Encoded dataset: one continuous 7-vector and one codebook index per
// snapshot, plus the per-dimension statistics the quantizers are fitted from.
struct LatentTable {
    std::vector<std::array<double, kLatentDim>> rows;
    std::vector<int> codebook_index;
    std::array<double, kLatentDim> mean{};
    std::array<double, kLatentDim> stddev{};

    std::size_t size() const { return rows.size(); }

    std::array<std::vector<double>, kLatentDim> columns() const {
        std::array<std::vector<double>, kLatentDim> cols;
        for (auto& c : cols) c.reserve(rows.size());
        for (const auto& r : rows)
            for (int d = 0; d < kLatentDim; ++d) cols[d].push_back(r[d]);
        return cols;
    }

    // CSV schema: header, then per row: snapshot index, codebook index,
    // 7 continuous values at 17 significant digits.
    void write_csv(const std::string& path) const {
        std::string out = "snapshot,codebook_index";
        for (int d = 0; d < kLatentDim; ++d) out += ",z" + std::to_string(d);
        out += "\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out += std::to_string(i) + "," + std::to_string(codebook_index[i]);
            for (int d = 0; d < kLatentDim; ++d) out += "," + format_double(rows[i][d]);
            out += "\n";
        }
        write_text_file(path, out);
    }

    void write_stats_csv(const std::string& path) const {
        std::string out = "dimension,mean,stddev\n";
        for (int d = 0; d < kLatentDim; ++d)
            out += std::to_string(d) + "," + format_double(mean[d]) + "," +
                   format_double(stddev[d]) + "\n";
        write_text_file(path, out);
    }

    static LatentTable read_csv(const std::string& table_path, const std::string& stats_path) {
        LatentTable t;
        const auto rows = flq::read_csv(table_path);
        if (rows.empty()) throw IoError("latent table: empty file " + table_path);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& r = rows[i];
            if (r.size() != 2 + kLatentDim)
                throw IoError("latent table: bad column count in " + table_path);
            std::array<double, kLatentDim> v{};
            for (int d = 0; d < kLatentDim; ++d) v[d] = parse_double(r[2 + d]);
            t.rows.push_back(v);
            t.codebook_index.push_back(int(parse_double(r[1])));
        }
        const auto stats = flq::read_csv(stats_path);
        if (stats.size() != kLatentDim + 1)
            throw IoError("latent stats: expected 7 dimensions in " + stats_path);
        for (int d = 0; d < kLatentDim; ++d) {
            t.mean[d] = parse_double(stats[d + 1][1]);
            t.stddev[d] = parse_double(stats[d + 1][2]);
        }
        return t;
    }
};

// N x 7 sample matrix with CSV round-trip, shared by the three priors.
struct SampleMatrix {
    std::vector<std::array<double, kLatentDim>> rows;

    void write_csv(const std::string& path) const {
        std::string out = "z0,z1,z2,z3,z4,z5,z6\n";
        for (const auto& r : rows) {
            for (int d = 0; d < kLatentDim; ++d) out += (d ? "," : "") + format_double(r[d]);
            out += "\n";
        }
        write_text_file(path, out);
    }

    static SampleMatrix read_csv(const std::string& path) {
        SampleMatrix m;
        const auto rows = flq::read_csv(path);
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() != kLatentDim)
                throw IoError("sample matrix: bad column count in " + path);
            std::array<double, kLatentDim> v{};
            for (int d = 0; d < kLatentDim; ++d) v[d] = parse_double(rows[i][d]);
            m.rows.push_back(v);
        }
        return m;
    }
};

} // namespace flq
