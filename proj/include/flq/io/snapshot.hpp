#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "flq/core/errors.hpp"
#include "flq/lbm/lattice.hpp"

namespace flq::io {

// Snapshot dataset file:
//   magic "FLQ1", then little-endian u32 nx, u32 ny, u32 count, u32 reserved,
//   then count * nx * ny float32 values, row-major, x fastest.

struct SnapshotDataset {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::vector<float> values; // count * nx * ny

    std::uint32_t count() const {
        const std::size_t per = std::size_t(nx) * ny;
        return per == 0 ? 0 : static_cast<std::uint32_t>(values.size() / per);
    }
    const float* frame(std::uint32_t k) const { return values.data() + std::size_t(k) * nx * ny; }
};

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}
} // namespace detail

inline void write_snapshots(const std::string& path, const SnapshotDataset& ds) {
    std::string buf;
    buf.reserve(20 + ds.values.size() * 4);
    buf += "FLQ1";
    detail::put_u32(buf, ds.nx);
    detail::put_u32(buf, ds.ny);
    detail::put_u32(buf, ds.count());
    detail::put_u32(buf, 0); // reserved
    static_assert(sizeof(float) == 4);
    const std::size_t bytes = ds.values.size() * 4;
    const std::size_t head = buf.size();
    buf.resize(head + bytes);
    std::memcpy(buf.data() + head, ds.values.data(), bytes);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_snapshots: cannot open " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoError("write_snapshots: write failed for " + path);
}

inline SnapshotDataset read_snapshots(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_snapshots: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 20) throw IoError("read_snapshots: truncated header in " + path);
    if (buf.compare(0, 4, "FLQ1") != 0) throw IoError("read_snapshots: bad magic in " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    SnapshotDataset ds;
    ds.nx = detail::get_u32(p + 4);
    ds.ny = detail::get_u32(p + 8);
    const std::uint32_t count = detail::get_u32(p + 12);
    const std::size_t expected = 20 + std::size_t(ds.nx) * ds.ny * count * 4;
    if (buf.size() != expected)
        throw IoError("read_snapshots: payload size mismatch in " + path + " (expected " +
                      std::to_string(expected) + " bytes, got " + std::to_string(buf.size()) +
                      ")");
    ds.values.resize(std::size_t(ds.nx) * ds.ny * count);
    std::memcpy(ds.values.data(), buf.data() + 20, ds.values.size() * 4);
    return ds;
}

inline SnapshotDataset pack_snapshots(const std::vector<lbm::VorticitySnapshot>& snaps) {
    SnapshotDataset ds;
    if (snaps.empty()) return ds;
    ds.nx = std::uint32_t(snaps.front().nx);
    ds.ny = std::uint32_t(snaps.front().ny);
    ds.values.reserve(snaps.size() * snaps.front().omega.size());
    for (const auto& s : snaps)
        for (double v : s.omega) ds.values.push_back(static_cast<float>(v));
    return ds;
}

} // namespace flq::io
