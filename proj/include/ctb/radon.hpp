#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ctb/sparse.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

/// Parallel-beam acquisition geometry. Angles sample [0, pi) uniformly;
/// detector bins are centered on the rotation axis.
struct Geometry {
    std::size_t image_height = 64;
    std::size_t image_width = 64;
    double pixel_spacing = 1.0;
    std::size_t num_angles = 60;
    std::size_t num_detectors = 95;
    double detector_spacing = 1.0;

    std::size_t num_rays() const { return num_angles * num_detectors; }
    std::size_t num_pixels() const { return image_height * image_width; }

    double angle(std::size_t a) const {
        return M_PI * static_cast<double>(a) / static_cast<double>(num_angles);
    }
    /// Signed detector coordinate of bin d (zero at the rotation center).
    double detector_pos(std::size_t d) const {
        return (static_cast<double>(d) -
                (static_cast<double>(num_detectors) - 1.0) / 2.0) * detector_spacing;
    }
    double image_diagonal() const {
        double hx = static_cast<double>(image_width) * pixel_spacing;
        double hy = static_cast<double>(image_height) * pixel_spacing;
        return std::sqrt(hx * hx + hy * hy);
    }

    void validate() const {
        if (image_height == 0 || image_width == 0)
            throw std::invalid_argument("Geometry: empty image");
        if (num_angles < 1 || num_detectors < 1)
            throw std::invalid_argument("Geometry: need at least one angle and detector");
        if (pixel_spacing <= 0.0 || detector_spacing <= 0.0)
            throw std::invalid_argument("Geometry: spacings must be positive");
        if (static_cast<double>(num_detectors) * detector_spacing < image_diagonal())
            throw std::invalid_argument(
                "Geometry: detector array too short to cover image diagonal");
    }
};

/// Sparse Radon transform with exact ray-pixel intersection lengths.
/// The adjoint is the literal matrix transpose, so <Au,v> == <u,A^T v>
/// up to floating rounding.
class RadonOperator {
  public:
    explicit RadonOperator(const Geometry& g) : geom_(g), matrix_(build(g)) {}

    const Geometry& geometry() const { return geom_; }
    const CsrMatrix& matrix() const { return matrix_; }

    Sinogram forward(const Image& u) const {
        if (u.shape != std::vector<std::size_t>{geom_.image_height, geom_.image_width})
            throw std::invalid_argument("RadonOperator::forward: image shape mismatch");
        return matrix_.apply(u, {geom_.num_angles, geom_.num_detectors});
    }

    Image adjoint(const Sinogram& f) const {
        if (f.shape != std::vector<std::size_t>{geom_.num_angles, geom_.num_detectors})
            throw std::invalid_argument("RadonOperator::adjoint: sinogram shape mismatch");
        return matrix_.apply_transpose(f, {geom_.image_height, geom_.image_width});
    }

  private:
    Geometry geom_;
    CsrMatrix matrix_;

    // Siddon-style traversal: for each ray, clip against the image box,
    // merge the x-plane and y-plane crossing parameters, and emit one
    // weight per traversed pixel equal to the segment length.
    static CsrMatrix build(const Geometry& g) {
        g.validate();
        const std::size_t H = g.image_height, W = g.image_width;
        const double h = g.pixel_spacing;
        const double x0 = -0.5 * static_cast<double>(W) * h;
        const double y0 = -0.5 * static_cast<double>(H) * h;
        const double x1 = -x0, y1 = -y0;

        CsrMatrix m(g.num_rays(), g.num_pixels());
        std::vector<double> ts;
        std::vector<std::size_t> cols;
        std::vector<double> vals;

        for (std::size_t a = 0; a < g.num_angles; ++a) {
            const double theta = g.angle(a);
            const double nx = std::cos(theta), ny = std::sin(theta);
            const double dx = -ny, dy = nx;  // ray direction, unit length
            for (std::size_t d = 0; d < g.num_detectors; ++d) {
                const double s = g.detector_pos(d);
                // ray: p(t) = s*(nx,ny) + t*(dx,dy)
                const double px = s * nx, py = s * ny;

                double tmin = -std::numeric_limits<double>::infinity();
                double tmax = std::numeric_limits<double>::infinity();
                bool hit = clip_axis(px, dx, x0, x1, tmin, tmax) &&
                           clip_axis(py, dy, y0, y1, tmin, tmax);
                cols.clear();
                vals.clear();
                if (hit && tmax - tmin > 1e-12) {
                    ts.clear();
                    ts.push_back(tmin);
                    ts.push_back(tmax);
                    collect_plane_crossings(px, dx, x0, h, W, tmin, tmax, ts);
                    collect_plane_crossings(py, dy, y0, h, H, tmin, tmax, ts);
                    std::sort(ts.begin(), ts.end());
                    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
                        const double len = ts[k + 1] - ts[k];
                        if (len <= 1e-12) continue;
                        const double tm = 0.5 * (ts[k] + ts[k + 1]);
                        const double mx = px + tm * dx, my = py + tm * dy;
                        auto ix = static_cast<std::ptrdiff_t>(std::floor((mx - x0) / h));
                        auto iy = static_cast<std::ptrdiff_t>(std::floor((my - y0) / h));
                        if (ix < 0 || iy < 0 || ix >= static_cast<std::ptrdiff_t>(W) ||
                            iy >= static_cast<std::ptrdiff_t>(H))
                            continue;
                        cols.push_back(static_cast<std::size_t>(iy) * W +
                                       static_cast<std::size_t>(ix));
                        vals.push_back(len);
                    }
                }
                m.push_row(cols, vals);
            }
        }
        return m;
    }

    static bool clip_axis(double p, double dir, double lo, double hi,
                          double& tmin, double& tmax) {
        if (std::fabs(dir) < 1e-15) return p > lo && p < hi;
        double t0 = (lo - p) / dir, t1 = (hi - p) / dir;
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        return tmin < tmax;
    }

    static void collect_plane_crossings(double p, double dir, double origin, double h,
                                        std::size_t count, double tmin, double tmax,
                                        std::vector<double>& ts) {
        if (std::fabs(dir) < 1e-15) return;
        for (std::size_t i = 1; i < count; ++i) {
            const double plane = origin + static_cast<double>(i) * h;
            const double t = (plane - p) / dir;
            if (t > tmin && t < tmax) ts.push_back(t);
        }
    }
};

/// Gaussian blur with a truncated kernel (radius ceil(4*sigma)), zero padding.
inline Image gaussian_blur(const Image& u, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double norm = 0.0;
    for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        double v = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
        k[t + radius] = v;
        norm += v;
    }
    for (double& v : k) v /= norm;

    const std::size_t H = u.shape[0], W = u.shape[1];
    Image tmp = Tensor::zeros({H, W}), out = Tensor::zeros({H, W});
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + t;
                if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(W))
                    acc += k[t + radius] * u.at(i, static_cast<std::size_t>(jj));
            }
            tmp.at(i, j) = acc;
        }
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + t;
                if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(H))
                    acc += k[t + radius] * tmp.at(static_cast<std::size_t>(ii), j);
            }
            out.at(i, j) = acc;
        }
    return out;
}

/// Axis-aligned pixel rectangle, [row0, row0+height) x [col0, col0+width).
struct PixelRect {
    std::size_t row0 = 0, col0 = 0, height = 0, width = 0;

    void validate_inside(std::size_t image_h, std::size_t image_w) const {
        if (height == 0 || width == 0)
            throw std::invalid_argument("PixelRect: zero area");
        if (row0 + height > image_h || col0 + width > image_w)
            throw std::invalid_argument("PixelRect: outside image bounds");
    }
    bool contains(std::size_t i, std::size_t j) const {
        return i >= row0 && i < row0 + height && j >= col0 && j < col0 + width;
    }
};

/// Sinogram-domain mask for a spatial region: the forward projection of the
/// Gaussian-smoothed region indicator, normalized to a maximum of exactly 1.
inline Sinogram sinogram_mask(const RadonOperator& op, const PixelRect& region,
                              double blur_sigma) {
    const Geometry& g = op.geometry();
    region.validate_inside(g.image_height, g.image_width);
    Image ind = Tensor::zeros({g.image_height, g.image_width});
    for (std::size_t i = region.row0; i < region.row0 + region.height; ++i)
        for (std::size_t j = region.col0; j < region.col0 + region.width; ++j)
            ind.at(i, j) = 1.0;
    Sinogram m = op.forward(gaussian_blur(ind, blur_sigma));
    double mx = max_value(m);
    if (mx <= 0.0) throw std::runtime_error("sinogram_mask: degenerate mask");
    for (double& v : m.data) {
        v /= mx;
        v = std::clamp(v, 0.0, 1.0);
    }
    return m;
}

}  // namespace ctb
