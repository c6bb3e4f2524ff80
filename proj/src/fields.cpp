#include "uvweave/fields.hpp"

#include "uvweave/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uvweave {

Field2::Field2(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
        throw ValidationError("Field2: invalid dimensions " + std::to_string(width) + "x" +
                              std::to_string(height) + "x" + std::to_string(channels));
    }
    data_.assign(cells() * static_cast<std::size_t>(channels), fill);
}

Field2 Field2::from_data(int width, int height, int channels, std::vector<double> data) {
    Field2 f(width, height, channels);
    if (data.size() != f.data_.size()) {
        throw ValidationError("Field2: data length " + std::to_string(data.size()) +
                              " does not match " + std::to_string(f.data_.size()));
    }
    for (double v : data) {
        if (!std::isfinite(v)) throw ValidationError("Field2: non-finite value");
    }
    f.data_ = std::move(data);
    return f;
}

void Field2::set_mask(Mask mask) {
    if (!mask.empty() && mask.size() != cells()) {
        throw ValidationError("Field2: mask length does not match grid");
    }
    valid_ = std::move(mask);
}


Sample sample_bilinear(const Field2& f, Coord p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("invalid coordinate");
    if (f.empty()) throw ValidationError("sample_bilinear: empty field");
    const BilinearStencil s = locate(p, f.width(), f.height());
    Sample out;
    const int nc = std::min(f.channels(), 4);
    for (int c = 0; c < nc; ++c) out.value[c] = blend(f, s, c);
    if (f.has_mask()) {
        const auto cells = s.cells(f.width());
        const auto w = s.weights();
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += f.valid_index(cells[k]) ? w[k] : 0.0;
        out.validity = v;
    }
    return out;
}

Field2 sobel_gradient(const Field2& f) {
    const int w = f.width();
    const int h = f.height();
    if (w < 3 || h < 3) throw ValidationError("sobel_gradient: grid must be at least 3x3");
    const int nc = f.channels();
    Field2 out(w, h, 2 * nc);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool ix = x > 0 && x < w - 1;
            const bool iy = y > 0 && y < h - 1;
            for (int c = 0; c < nc; ++c) {
                double gx;
                if (ix && iy) {
                    gx = ((f.at(x + 1, y - 1, c) - f.at(x - 1, y - 1, c)) +
                          2.0 * (f.at(x + 1, y, c) - f.at(x - 1, y, c)) +
                          (f.at(x + 1, y + 1, c) - f.at(x - 1, y + 1, c))) * w / 8.0;
                } else if (ix) {
                    gx = (f.at(x + 1, y, c) - f.at(x - 1, y, c)) * w / 2.0;
                } else if (x == 0) {
                    gx = (f.at(1, y, c) - f.at(0, y, c)) * w;
                } else {
                    gx = (f.at(w - 1, y, c) - f.at(w - 2, y, c)) * w;
                }
                double gy;
                if (ix && iy) {
                    gy = ((f.at(x - 1, y + 1, c) - f.at(x - 1, y - 1, c)) +
                          2.0 * (f.at(x, y + 1, c) - f.at(x, y - 1, c)) +
                          (f.at(x + 1, y + 1, c) - f.at(x + 1, y - 1, c))) * h / 8.0;
                } else if (iy) {
                    gy = (f.at(x, y + 1, c) - f.at(x, y - 1, c)) * h / 2.0;
                } else if (y == 0) {
                    gy = (f.at(x, 1, c) - f.at(x, 0, c)) * h;
                } else {
                    gy = (f.at(x, h - 1, c) - f.at(x, h - 2, c)) * h;
                }
                out.at(x, y, 2 * c) = gx;
                out.at(x, y, 2 * c + 1) = gy;
            }
        }
    }
    return out;
}

std::vector<std::int64_t> nearest_seed(int width, int height, const Mask& seeds) {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    std::vector<std::int64_t> donor(n, -1);
    std::vector<std::uint32_t> queue;
    queue.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (seeds[i]) {
            donor[i] = static_cast<std::int64_t>(i);
            queue.push_back(static_cast<std::uint32_t>(i));
        }
    }
    static constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t cur = queue[head];
        const int cx = static_cast<int>(cur % width);
        const int cy = static_cast<int>(cur / width);
        const bool inner = cx > 0 && cy > 0 && cx + 1 < width && cy + 1 < height;
        for (int k = 0; k < 8; ++k) {
            const int nx = cx + kDx[k];
            const int ny = cy + kDy[k];
            if (!inner && (nx < 0 || ny < 0 || nx >= width || ny >= height)) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * width + nx;
            if (donor[ni] >= 0) continue;
            donor[ni] = donor[cur];
            queue.push_back(static_cast<std::uint32_t>(ni));
        }
    }
    return donor;
}

}  // namespace uvweave
