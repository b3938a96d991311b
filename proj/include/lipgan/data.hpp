#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "lipgan/errors.hpp"
#include "lipgan/rng.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

// 2-D toy targets. Every emitted sample is clamped into [clip_lo, clip_hi]^2
// so the declared value range used by the Theorem-1 bound really contains the
// data; defaults leave six standard deviations of slack, so the clamp is a
// formality.
struct ToyDistribution {
    enum class Kind { gaussian_ring, grid, point_mass };

    Kind kind = Kind::gaussian_ring;
    int modes = 8;
    double radius = 2.0;
    double stddev = 0.05;
    int grid_side = 5;
    double grid_extent = 2.0;
    std::array<double, 2> location{0.0, 0.0};
    double clip_lo = -1.0, clip_hi = 1.0;

    static ToyDistribution ring(int modes, double radius, double stddev) {
        ToyDistribution d;
        d.kind = Kind::gaussian_ring;
        d.modes = modes;
        d.radius = radius;
        d.stddev = stddev;
        d.clip_hi = radius + 6.0 * stddev;
        d.clip_lo = -d.clip_hi;
        d.validate();
        return d;
    }
    static ToyDistribution grid(int side, double extent, double stddev) {
        ToyDistribution d;
        d.kind = Kind::grid;
        d.grid_side = side;
        d.grid_extent = extent;
        d.stddev = stddev;
        d.clip_hi = extent + 6.0 * stddev;
        d.clip_lo = -d.clip_hi;
        d.validate();
        return d;
    }
    static ToyDistribution point(double x, double y) {
        ToyDistribution d;
        d.kind = Kind::point_mass;
        d.location = {x, y};
        double r = std::max({std::abs(x), std::abs(y), 1.0});
        d.clip_lo = -r;
        d.clip_hi = r;
        return d;
    }

    void validate() const {
        if (kind != Kind::point_mass && !(stddev > 0.0)) throw ConfigError("stddev must be positive");
        if (kind == Kind::gaussian_ring && modes < 1) throw ConfigError("ring needs at least one mode");
        if (kind == Kind::grid && grid_side < 1) throw ConfigError("grid needs at least one cell per side");
        if (clip_hi < clip_lo) throw ConfigError("inverted clip range");
    }

    std::vector<std::array<double, 2>> mode_centers() const {
        std::vector<std::array<double, 2>> centers;
        switch (kind) {
            case Kind::gaussian_ring:
                for (int k = 0; k < modes; ++k) {
                    double theta = 6.283185307179586 * static_cast<double>(k) / modes;
                    centers.push_back({radius * std::cos(theta), radius * std::sin(theta)});
                }
                break;
            case Kind::grid:
                for (int i = 0; i < grid_side; ++i)
                    for (int j = 0; j < grid_side; ++j) {
                        auto coord = [&](int q) {
                            return grid_side == 1 ? 0.0
                                                  : -grid_extent + 2.0 * grid_extent * q / (grid_side - 1.0);
                        };
                        centers.push_back({coord(i), coord(j)});
                    }
                break;
            case Kind::point_mass: centers.push_back(location); break;
        }
        return centers;
    }
};

inline Tensor sample_real(const ToyDistribution& dist, std::size_t n, Rng& rng) {
    dist.validate();
    if (n < 1) throw UsageError("sample_real needs n >= 1");
    auto centers = dist.mode_centers();
    Tensor out = Tensor::zeros({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = centers[centers.size() == 1 ? 0 : rng.next_u64() % centers.size()];
        double s = dist.kind == ToyDistribution::Kind::point_mass ? 0.0 : dist.stddev;
        for (std::size_t d = 0; d < 2; ++d) {
            double v = c[d] + (s > 0.0 ? rng.normal(0.0, s) : 0.0);
            out.values[i * 2 + d] = std::clamp(v, dist.clip_lo, dist.clip_hi);
        }
    }
    return out;
}

inline Tensor sample_noise(std::size_t dim, std::size_t n, Rng& rng) {
    if (dim < 1) throw UsageError("sample_noise needs dim >= 1");
    if (n < 1) throw UsageError("sample_noise needs n >= 1");
    Tensor out = Tensor::zeros({n, dim});
    for (double& v : out.values) v = rng.normal();
    return out;
}

// ---- MNIST IDX ingestion ----

struct ImageDataset {
    Tensor images;  // [N, rows*cols], values in [-1, 1]
    std::size_t rows = 0, cols = 0, channels = 1;
    std::vector<std::uint8_t> labels;  // empty when no label file given
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return bytes;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed");
    std::vector<std::uint8_t> out;
    out.reserve(in.size() * 4);
    std::array<std::uint8_t, 1 << 16> buf;
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip stream is corrupt (zlib code " + std::to_string(ret) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

// Raw bytes of `path`, transparently decompressed when gzip magic is present.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
    return bytes;
}

inline std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size())
        throw FormatError("IDX file truncated: expected 4 header bytes at offset " + std::to_string(off) +
                          ", file has " + std::to_string(b.size()));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

inline std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Big-endian IDX parser; pixels are mapped to [-1, 1] via p/127.5 - 1.
inline ImageDataset load_mnist_idx(const std::string& images_path,
                                   const std::optional<std::string>& labels_path = std::nullopt) {
    auto bytes = detail::read_maybe_gzip(images_path);
    std::uint32_t magic = detail::read_u32_be(bytes, 0);
    if (magic != kIdxImageMagic)
        throw FormatError("bad IDX image magic " + detail::hex32(magic) + ", expected " +
                          detail::hex32(kIdxImageMagic));
    const std::size_t n = detail::read_u32_be(bytes, 4);
    const std::size_t rows = detail::read_u32_be(bytes, 8);
    const std::size_t cols = detail::read_u32_be(bytes, 12);
    const std::size_t need = 16 + n * rows * cols;
    if (bytes.size() < need)
        throw FormatError("IDX image file truncated: expected " + std::to_string(need) + " bytes, got " +
                          std::to_string(bytes.size()));

    ImageDataset ds;
    ds.rows = rows;
    ds.cols = cols;
    ds.images = Tensor::zeros({n, rows * cols});
    for (std::size_t i = 0; i < n * rows * cols; ++i)
        ds.images.values[i] = static_cast<double>(bytes[16 + i]) / 127.5 - 1.0;

    if (labels_path) {
        auto lb = detail::read_maybe_gzip(*labels_path);
        std::uint32_t lmagic = detail::read_u32_be(lb, 0);
        if (lmagic != kIdxLabelMagic)
            throw FormatError("bad IDX label magic " + detail::hex32(lmagic) + ", expected " +
                              detail::hex32(kIdxLabelMagic));
        const std::size_t ln = detail::read_u32_be(lb, 4);
        if (ln != n) throw FormatError("label count " + std::to_string(ln) + " != image count " + std::to_string(n));
        if (lb.size() < 8 + ln)
            throw FormatError("IDX label file truncated: expected " + std::to_string(8 + ln) + " bytes, got " +
                              std::to_string(lb.size()));
        ds.labels.assign(lb.begin() + 8, lb.begin() + 8 + ln);
    }
    return ds;
}

}  // namespace lipgan
