#pragma once
// Network checkpoint container. Self-describing binary format, documented
// byte-for-byte in docs/checkpoint_format.md; all integers and IEEE-754
// doubles are stored little-endian so checkpoints round-trip bit-exactly
// across platforms.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xuq/network.hpp"

namespace xuq::net {

namespace detail {

inline constexpr char kMagic[8] = {'X', 'U', 'Q', 'N', 'E', 'T', '0', '1'};

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
  public:
    Reader(const std::string& buf) : buf_(buf) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == buf_.size(); }

  private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const DenseNetwork& net) {
    std::string out(detail::kMagic, sizeof detail::kMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
    detail::put_f64(out, net.dropout_probability());
    detail::put_f64(out, net.dropconnect_probability());
    for (const Layer& layer : net.layers()) {
        detail::put_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
        const std::string name = activation_name(layer.activation);
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        for (double w : layer.weights.data()) detail::put_f64(out, w);
        for (double b : layer.bias) detail::put_f64(out, b);
    }
    return out;
}

inline DenseNetwork deserialize_checkpoint(const std::string& buf) {
    if (buf.size() < sizeof detail::kMagic ||
        std::memcmp(buf.data(), detail::kMagic, sizeof detail::kMagic) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    detail::Reader r(buf);
    r.bytes(sizeof detail::kMagic);
    const std::uint32_t layer_count = r.u32();
    const double dropout_p = r.f64();
    const double dropconnect_p = r.f64();
    std::vector<Layer> layers;
    layers.reserve(layer_count);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        const std::uint32_t name_len = r.u32();
        const Activation act = parse_activation(r.bytes(name_len));
        Layer layer{Matrix(rows, cols), std::vector<double>(rows), act};
        for (auto& w : layer.weights.data()) w = r.f64();
        for (auto& b : layer.bias) b = r.f64();
        layers.push_back(std::move(layer));
    }
    if (!r.exhausted()) throw std::runtime_error("checkpoint: trailing bytes");
    return DenseNetwork(std::move(layers), dropout_p, dropconnect_p);
}

inline void save_checkpoint(const DenseNetwork& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    const std::string buf = serialize_checkpoint(net);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline DenseNetwork load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf);
}

}  // namespace xuq::net
