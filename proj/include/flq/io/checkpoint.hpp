#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "flq/ad/tensor.hpp"
#include "flq/core/errors.hpp"

namespace flq::io {

// Parameter checkpoint:
//   magic "FLP1", u32 block count, then per block:
//   u32 name length, name bytes, u32 rank, rank * u32 extents, float64 data.
// All integers little-endian; blocks are written in insertion order.

class Checkpoint {
public:
    void put(const std::string& name, const ad::Tensor& t) {
        if (index_.count(name)) {
            blocks_[index_.at(name)].second = t;
        } else {
            index_[name] = blocks_.size();
            blocks_.emplace_back(name, t);
        }
    }

    const ad::Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw IoError("checkpoint: missing block '" + name + "'");
        return blocks_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return blocks_.size(); }
    const std::vector<std::pair<std::string, ad::Tensor>>& blocks() const { return blocks_; }

    void save(const std::string& path) const {
        std::string buf;
        buf += "FLP1";
        put_u32(buf, std::uint32_t(blocks_.size()));
        for (const auto& [name, t] : blocks_) {
            put_u32(buf, std::uint32_t(name.size()));
            buf += name;
            put_u32(buf, std::uint32_t(t.rank()));
            for (auto e : t.shape) put_u32(buf, std::uint32_t(e));
            const std::size_t head = buf.size();
            buf.resize(head + t.data.size() * 8);
            std::memcpy(buf.data() + head, t.data.data(), t.data.size() * 8);
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("checkpoint: cannot open " + path);
        out.write(buf.data(), std::streamsize(buf.size()));
        if (!out) throw IoError("checkpoint: write failed for " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("checkpoint: cannot open " + path);
        std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (buf.size() < 8 || buf.compare(0, 4, "FLP1") != 0)
            throw IoError("checkpoint: bad magic in " + path);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
        std::size_t pos = 4;
        auto need = [&](std::size_t n) {
            if (pos + n > buf.size()) throw IoError("checkpoint: truncated file " + path);
        };
        auto read_u32 = [&]() {
            need(4);
            std::uint32_t v = std::uint32_t(p[pos]) | (std::uint32_t(p[pos + 1]) << 8) |
                              (std::uint32_t(p[pos + 2]) << 16) |
                              (std::uint32_t(p[pos + 3]) << 24);
            pos += 4;
            return v;
        };
        Checkpoint ck;
        const std::uint32_t count = read_u32();
        for (std::uint32_t b = 0; b < count; ++b) {
            const std::uint32_t name_len = read_u32();
            need(name_len);
            std::string name(buf.data() + pos, name_len);
            pos += name_len;
            const std::uint32_t rank = read_u32();
            std::vector<std::size_t> shape(rank);
            for (auto& e : shape) e = read_u32();
            ad::Tensor t(shape);
            need(t.data.size() * 8);
            std::memcpy(t.data.data(), buf.data() + pos, t.data.size() * 8);
            pos += t.data.size() * 8;
            ck.put(name, t);
        }
        if (pos != buf.size()) throw IoError("checkpoint: trailing bytes in " + path);
        return ck;
    }

private:
    static void put_u32(std::string& out, std::uint32_t v) {
        out.push_back(char(v & 0xff));
        out.push_back(char((v >> 8) & 0xff));
        out.push_back(char((v >> 16) & 0xff));
        out.push_back(char((v >> 24) & 0xff));
    }

    std::vector<std::pair<std::string, ad::Tensor>> blocks_;
    std::map<std::string, std::size_t> index_;
};

} // namespace flq::io
