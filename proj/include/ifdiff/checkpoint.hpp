#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ifdiff/denoiser.hpp"
#include "ifdiff/errors.hpp"
#include "ifdiff/schedule.hpp"

namespace ifdiff {

// Checkpoint file layout:
//   magic "IFDX1" (5 bytes), version u32,
//   dims block (5 x u64),
//   schedule block (T u64, then beta/alpha/alpha_bar/one_minus_alpha_bar/
//     posterior_var as f64 arrays),
//   meta block (count u32, then length-prefixed key/value strings),
//   parameter arrays as f64 in declaration order,
//   CRC-32 of all preceding bytes (u32).
// All integers little-endian; doubles as raw IEEE-754 bits.

inline constexpr char kCheckpointMagic[5] = {'I', 'F', 'D', 'X', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            }
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) {
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    }
    return ~crc;
}

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back((v >> (8 * i)) & 0xffu);
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back((v >> (8 * i)) & 0xffu);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64_array(const std::vector<double>& a) {
        for (double v : a) f64(v);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void raw(const char* p, std::size_t n) {
        bytes_.insert(bytes_.end(), p, p + n);
    }
    const std::vector<unsigned char>& bytes() const { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<double> f64_array(std::size_t count) {
        std::vector<double> a(count);
        for (double& v : a) v = f64();
        return a;
    }
    std::string str() {
        std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
        pos_ += len;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > n_) throw DataError("checkpoint truncated");
    }
    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

using CheckpointMeta = std::map<std::string, std::string>;

inline void save_checkpoint(const DenoiserParams& params, const NoiseSchedule& sched,
                            const CheckpointMeta& meta, const std::string& path) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic, 5);
    w.u32(kCheckpointVersion);
    w.u64(params.dims.input);
    w.u64(params.dims.hidden);
    w.u64(params.dims.layers);
    w.u64(params.dims.time_dim);
    w.u64(params.dims.cond_dim);
    w.u64(sched.T);
    w.f64_array(sched.beta);
    w.f64_array(sched.alpha);
    w.f64_array(sched.alpha_bar);
    w.f64_array(sched.one_minus_alpha_bar);
    w.f64_array(sched.posterior_var);
    w.u32(static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        w.str(k);
        w.str(v);
    }
    params.for_each_array([&](const std::vector<double>& a) { w.f64_array(a); });

    std::uint32_t crc = detail::crc32(w.bytes().data(), w.bytes().size());
    detail::ByteWriter trailer;
    trailer.u32(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.bytes().size()));
    out.write(reinterpret_cast<const char*>(trailer.bytes().data()), 4);
    if (!out) throw DataError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
    DenoiserParams params;
    NoiseSchedule sched;
    CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 5 + 4 + 4) throw DataError("checkpoint truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0) {
        throw DataError("not a checkpoint file (bad magic)");
    }
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i) {
        stored_crc |= std::uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
    }
    std::uint32_t actual_crc = detail::crc32(bytes.data(), bytes.size() - 4);
    if (stored_crc != actual_crc) throw DataError("checkpoint checksum mismatch");

    detail::ByteReader r(bytes.data() + 5, bytes.size() - 9);
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    LoadedCheckpoint c;
    c.params.dims.input = r.u64();
    c.params.dims.hidden = r.u64();
    c.params.dims.layers = r.u64();
    c.params.dims.time_dim = r.u64();
    c.params.dims.cond_dim = r.u64();
    c.params.dims.validate();
    c.sched.T = r.u64();
    if (c.sched.T < 2) throw DataError("checkpoint schedule T < 2");
    c.sched.beta = r.f64_array(c.sched.T);
    c.sched.alpha = r.f64_array(c.sched.T);
    c.sched.alpha_bar = r.f64_array(c.sched.T);
    c.sched.one_minus_alpha_bar = r.f64_array(c.sched.T);
    c.sched.posterior_var = r.f64_array(c.sched.T);
    std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        c.meta[k] = r.str();
    }
    const DenoiserDims& d = c.params.dims;
    c.params.w_in = r.f64_array(d.hidden * d.input);
    c.params.b_in = r.f64_array(d.hidden);
    c.params.w_cond = r.f64_array(d.hidden * d.cond_dim);
    c.params.w_time = r.f64_array(d.hidden * d.time_dim);
    c.params.w_hidden.resize(d.layers - 1);
    c.params.b_hidden.resize(d.layers - 1);
    for (std::size_t l = 0; l + 1 < d.layers; ++l) {
        c.params.w_hidden[l] = r.f64_array(d.hidden * d.hidden);
        c.params.b_hidden[l] = r.f64_array(d.hidden);
    }
    c.params.w_out = r.f64_array(d.input * d.hidden);
    c.params.b_out = r.f64_array(d.input);
    if (r.pos() != bytes.size() - 9) {
        throw DataError("checkpoint has trailing bytes");
    }
    return c;
}

}  // namespace ifdiff
