#include "uvweave/io.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace uvweave {

namespace {

// Whitespace-separated header tokens with byte offsets.
class HeaderReader {
public:
    HeaderReader(std::string_view bytes, const char* format) : b_(bytes), format_(format) {}

    std::string_view token() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
        if (start == pos_) fail("missing header field");
        return b_.substr(start, pos_ - start);
    }

    long integer(long lo, long hi) {
        const std::size_t at = next_offset();
        const std::string_view t = token();
        long v = 0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size() || v < lo || v > hi)
            throw FormatError(std::string(format_) + ": bad integer field", at);
        return v;
    }

    double real() {
        const std::size_t at = next_offset();
        const std::string t(token());
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size() || !std::isfinite(v)) throw FormatError(std::string(format_) + ": bad scale field", at);
        return v;
    }

    // Exactly one whitespace byte separates the header from the data.
    std::size_t data_start() {
        if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
            fail("header not terminated");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const char* what) const { throw FormatError(std::string(format_) + ": " + what, pos_); }

private:
    void skip_space() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {  // comment to end of line
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }
    std::size_t next_offset() {
        skip_space();
        return pos_;
    }

    std::string_view b_;
    const char* format_;
    std::size_t pos_ = 0;
};

float load_float(const char* p, bool little) {
    std::uint32_t u;
    std::memcpy(&u, p, 4);
    if ((std::endian::native == std::endian::little) != little) u = __builtin_bswap32(u);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void store_float(std::string& out, float f, bool little) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    if ((std::endian::native == std::endian::little) != little) u = __builtin_bswap32(u);
    char c[4];
    std::memcpy(c, &u, 4);
    out.append(c, 4);
}

constexpr long kMaxDim = 1 << 16;

void check_finite(const Field2& f, const char* what) {
    for (double v : f.data())
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
}

}  // namespace

Field2 parse_pfm(std::string_view bytes) {
    HeaderReader h(bytes, "pfm");
    const std::string_view magic = h.token();
    int nc = 0;
    if (magic == "PF") nc = 3;
    else if (magic == "Pf") nc = 1;
    else throw FormatError("pfm: bad magic", 0);
    const int w = static_cast<int>(h.integer(1, kMaxDim));
    const int ht = static_cast<int>(h.integer(1, kMaxDim));
    const double scale = h.real();
    if (scale == 0.0) h.fail("zero scale");
    const bool little = scale < 0.0;
    const std::size_t start = h.data_start();
    const std::size_t need = static_cast<std::size_t>(w) * ht * nc * 4;
    if (bytes.size() - start < need) throw FormatError("pfm: truncated data", bytes.size());
    std::vector<double> data(static_cast<std::size_t>(w) * ht * nc);
    const char* p = bytes.data() + start;
    for (int row = 0; row < ht; ++row) {
        const int y = ht - 1 - row;  // bottom row first
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c, p += 4)
                data[(static_cast<std::size_t>(y) * w + x) * nc + c] = load_float(p, little);
    }
    try {
        return Field2::from_data(w, ht, nc, std::move(data));
    } catch (const ValidationError&) {
        throw FormatError("pfm: non-finite sample", start);
    }
}

std::string encode_pfm(const Field2& f, bool little_endian) {
    if (f.channels() != 1 && f.channels() != 3) throw ValidationError("pfm: only 1 or 3 channels");
    if (f.empty()) throw ValidationError("pfm: empty field");
    check_finite(f, "pfm");
    std::string out = std::string(f.channels() == 3 ? "PF" : "Pf") + "\n" + std::to_string(f.width()) + " " +
                      std::to_string(f.height()) + "\n" + (little_endian ? "-1.0" : "1.0") + "\n";
    out.reserve(out.size() + f.data().size() * 4);
    for (int row = 0; row < f.height(); ++row) {
        const int y = f.height() - 1 - row;
        for (int x = 0; x < f.width(); ++x)
            for (int c = 0; c < f.channels(); ++c) store_float(out, static_cast<float>(f.at(x, y, c)), little_endian);
    }
    return out;
}

Field2 parse_ppm(std::string_view bytes) {
    HeaderReader h(bytes, "ppm");
    if (h.token() != "P6") throw FormatError("ppm: bad magic", 0);
    const int w = static_cast<int>(h.integer(1, kMaxDim));
    const int ht = static_cast<int>(h.integer(1, kMaxDim));
    const long maxval = h.integer(1, 65535);
    if (maxval != 255) h.fail("only maxval 255 is supported");
    const std::size_t start = h.data_start();
    const std::size_t need = static_cast<std::size_t>(w) * ht * 3;
    if (bytes.size() - start < need) throw FormatError("ppm: truncated data", bytes.size());
    Field2 f(w, ht, 3);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
    for (std::size_t i = 0; i < need; ++i) f.data()[i] = p[i] / 255.0;
    return f;
}

std::string encode_ppm(const Field2& f) {
    if (f.channels() != 3) throw ValidationError("ppm: needs 3 channels");
    if (f.empty()) throw ValidationError("ppm: empty field");
    std::string out = "P6\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n255\n";
    const std::size_t head = out.size();
    out.resize(head + f.data().size());
    for (std::size_t i = 0; i < f.data().size(); ++i) {
        const double v = std::clamp(f.data()[i], 0.0, 1.0);
        out[head + i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    return out;
}

FlowField parse_flo(std::string_view bytes) {
    if (bytes.size() < 12) throw FormatError("flo: truncated header", bytes.size());
    if (load_float(bytes.data(), true) != 202021.25f) throw FormatError("flo: bad magic", 0);
    std::int32_t w, h;
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    if constexpr (std::endian::native != std::endian::little) {
        w = static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(w)));
        h = static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(h)));
    }
    if (w < 1 || w > kMaxDim) throw FormatError("flo: bad width", 4);
    if (h < 1 || h > kMaxDim) throw FormatError("flo: bad height", 8);
    const std::size_t need = static_cast<std::size_t>(w) * h * 8;
    if (bytes.size() - 12 < need) throw FormatError("flo: truncated data", bytes.size());
    FlowField f;
    f.displacement = Field2(w, h, 2);
    const char* p = bytes.data() + 12;
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i, p += 8) {
        const float dx = load_float(p, true), dy = load_float(p + 4, true);
        // Middlebury marks unknown flow with huge values; treat as zero.
        f.displacement.at_index(i, 0) = std::abs(dx) < 1e9f ? dx / static_cast<double>(w) : 0.0;
        f.displacement.at_index(i, 1) = std::abs(dy) < 1e9f ? dy / static_cast<double>(h) : 0.0;
    }
    return f;
}

std::string encode_flo(const FlowField& f) {
    if (f.displacement.empty()) throw ValidationError("flo: empty flow");
    std::string out;
    store_float(out, 202021.25f, true);
    for (std::int32_t v : {static_cast<std::int32_t>(f.width()), static_cast<std::int32_t>(f.height())}) {
        std::uint32_t u = static_cast<std::uint32_t>(v);
        if constexpr (std::endian::native != std::endian::little) u = __builtin_bswap32(u);
        char c[4];
        std::memcpy(c, &u, 4);
        out.append(c, 4);
    }
    for (std::size_t i = 0; i < f.displacement.cells(); ++i) {
        store_float(out, static_cast<float>(f.displacement.at_index(i, 0) * f.width()), true);
        store_float(out, static_cast<float>(f.displacement.at_index(i, 1) * f.height()), true);
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ValidationError("cannot write " + path);
    }
    std::filesystem::rename(tmp, path);
}

namespace {

template <class F>
auto with_path(const std::string& path, F&& parse) {
    try {
        return parse(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what(), e.offset());
    }
}

}  // namespace

Field2 read_pfm(const std::string& path) {
    return with_path(path, [](const std::string& b) { return parse_pfm(b); });
}
void write_pfm(const std::string& path, const Field2& f, bool little_endian) {
    write_file(path, encode_pfm(f, little_endian));
}
Field2 read_ppm(const std::string& path) {
    return with_path(path, [](const std::string& b) { return parse_ppm(b); });
}
void write_ppm(const std::string& path, const Field2& f) { write_file(path, encode_ppm(f)); }
FlowField read_flo(const std::string& path) {
    return with_path(path, [](const std::string& b) { return parse_flo(b); });
}
void write_flo(const std::string& path, const FlowField& f) { write_file(path, encode_flo(f)); }

Mask read_mask(const std::string& path, int* width, int* height) {
    const Field2 f = read_pfm(path);
    if (f.channels() != 1) throw ValidationError(path + ": mask must have one channel");
    Mask m(f.cells());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = f.at_index(i) > 0.5 ? 1 : 0;
    if (width) *width = f.width();
    if (height) *height = f.height();
    return m;
}

void write_mask(const std::string& path, const Mask& m, int width, int height) {
    if (m.size() != static_cast<std::size_t>(width) * height) throw ValidationError("mask: size mismatch");
    Field2 f(width, height, 1);
    for (std::size_t i = 0; i < m.size(); ++i) f.at_index(i) = m[i] ? 1.0 : 0.0;
    write_pfm(path, f);
}

void write_uvmap(const std::string& uv_path, const std::string& mask_path, const UVMap& P) {
    Field2 f(P.width(), P.height(), 3);
    for (std::size_t i = 0; i < P.cells(); ++i) {
        f.at_index(i, 0) = P.uv.at_index(i, 0);
        f.at_index(i, 1) = P.uv.at_index(i, 1);
        f.at_index(i, 2) = P.part_index(i);
    }
    write_pfm(uv_path, f);
    write_mask(mask_path, P.silhouette, P.width(), P.height());
}

UVMap read_uvmap(const std::string& uv_path, const std::string& mask_path, bool with_parts) {
    const Field2 f = read_pfm(uv_path);
    if (f.channels() != 3) throw ValidationError(uv_path + ": UV map must have three channels");
    int mw = 0, mh = 0;
    Mask sil = read_mask(mask_path, &mw, &mh);
    if (mw != f.width() || mh != f.height()) throw ValidationError(mask_path + ": size differs from " + uv_path);
    UVMap P(f.width(), f.height(), with_parts);
    for (std::size_t i = 0; i < P.cells(); ++i) {
        P.uv.at_index(i, 0) = f.at_index(i, 0);
        P.uv.at_index(i, 1) = f.at_index(i, 1);
        if (with_parts) {
            const double p = f.at_index(i, 2);
            if (p < 0 || p > kPartCount || p != std::floor(p)) throw ValidationError(uv_path + ": bad part index");
            P.part[i] = static_cast<std::uint8_t>(p);
        }
    }
    P.silhouette = std::move(sil);
    P.validate();
    return P;
}

}  // namespace uvweave
