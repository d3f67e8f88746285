#include "shapebias/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace shapebias {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'T', '1'};

void put_u64_le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

struct Header {
    Dtype dtype;
    std::vector<int64_t> shape;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("NDT1: bad magic in " + path);
    }
    uint8_t dtype = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&dtype), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is || dtype > 1) throw std::runtime_error("NDT1: bad dtype code in " + path);
    Header h;
    h.dtype = static_cast<Dtype>(dtype);
    h.shape.resize(rank);
    for (uint8_t i = 0; i < rank; ++i) h.shape[i] = static_cast<int64_t>(get_u64_le(is));
    if (!is) throw std::runtime_error("NDT1: truncated header in " + path);
    return h;
}

void write_header(std::ostream& os, Dtype dtype, const std::vector<int64_t>& shape) {
    os.write(kMagic, 4);
    uint8_t d = static_cast<uint8_t>(dtype);
    uint8_t r = static_cast<uint8_t>(shape.size());
    os.write(reinterpret_cast<const char*>(&d), 1);
    os.write(reinterpret_cast<const char*>(&r), 1);
    for (int64_t dim : shape) put_u64_le(os, static_cast<uint64_t>(dim));
}

template <typename Elem>
void write_payload_le(std::ostream& os, const Elem* p, int64_t n) {
    // x86 target, but keep the encode explicit so the format is the contract.
    static_assert(sizeof(Elem) == 4 || sizeof(Elem) == 8);
    using Bits = std::conditional_t<sizeof(Elem) == 8, uint64_t, uint32_t>;
    std::vector<unsigned char> buf(static_cast<size_t>(n) * sizeof(Elem));
    for (int64_t i = 0; i < n; ++i) {
        Bits bits;
        std::memcpy(&bits, p + i, sizeof(Elem));
        for (size_t b = 0; b < sizeof(Elem); ++b) {
            buf[static_cast<size_t>(i) * sizeof(Elem) + b] =
                static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        }
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

template <typename Elem>
std::vector<Elem> read_payload_le(std::istream& is, int64_t n, const std::string& path) {
    using Bits = std::conditional_t<sizeof(Elem) == 8, uint64_t, uint32_t>;
    std::vector<unsigned char> buf(static_cast<size_t>(n) * sizeof(Elem));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("NDT1: truncated payload in " + path);
    std::vector<Elem> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Bits bits = 0;
        for (size_t b = 0; b < sizeof(Elem); ++b) {
            bits |= static_cast<Bits>(buf[static_cast<size_t>(i) * sizeof(Elem) + b]) << (8 * b);
        }
        std::memcpy(&out[static_cast<size_t>(i)], &bits, sizeof(Elem));
    }
    return out;
}

} // namespace

void save_ndt(const std::string& path, const Tensor& t, Dtype dtype) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("NDT1: cannot open for write: " + path);
    write_header(os, dtype, t.shape());
    if (dtype == Dtype::f64) {
        write_payload_le(os, t.raw(), t.numel());
    } else {
        std::vector<float> narrow(static_cast<size_t>(t.numel()));
        for (int64_t i = 0; i < t.numel(); ++i) narrow[static_cast<size_t>(i)] = static_cast<float>(t[i]);
        write_payload_le(os, narrow.data(), t.numel());
    }
    if (!os) throw std::runtime_error("NDT1: write failed: " + path);
}

void save_ndt(const std::string& path, const TensorF& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("NDT1: cannot open for write: " + path);
    write_header(os, Dtype::f32, t.shape());
    write_payload_le(os, t.raw(), t.numel());
    if (!os) throw std::runtime_error("NDT1: write failed: " + path);
}

Tensor load_ndt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("NDT1: cannot open: " + path);
    Header h = read_header(is, path);
    int64_t n = Tensor::count(h.shape);
    if (h.dtype == Dtype::f64) {
        return Tensor(h.shape, read_payload_le<double>(is, n, path));
    }
    auto narrow = read_payload_le<float>(is, n, path);
    std::vector<double> wide(narrow.begin(), narrow.end());
    return Tensor(h.shape, std::move(wide));
}

TensorF load_ndt_f32(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("NDT1: cannot open: " + path);
    Header h = read_header(is, path);
    int64_t n = TensorF::count(h.shape);
    if (h.dtype == Dtype::f32) {
        return TensorF(h.shape, read_payload_le<float>(is, n, path));
    }
    auto wide = read_payload_le<double>(is, n, path);
    std::vector<float> narrow(wide.begin(), wide.end());
    return TensorF(h.shape, std::move(narrow)); // lossy by request
}

Dtype peek_ndt_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("NDT1: cannot open: " + path);
    return read_header(is, path).dtype;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace shapebias
