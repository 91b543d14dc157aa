#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "ctb/recon.hpp"

namespace ctb {

enum class FilterWindow { ramp, hann };

struct FbpConfig {
    FilterWindow window = FilterWindow::hann;
    double cutoff = 0.6410;  // fraction of the detector Nyquist frequency

    void validate() const {
        if (!(cutoff > 0.0 && cutoff <= 1.0))
            throw std::invalid_argument("FbpConfig: cutoff must lie in (0,1]");
    }
};

/// Spatial ramp-filter kernel of length 2*num_detectors-1 (center tap at
/// num_detectors-1). The frequency response |nu| * window(nu / (cutoff *
/// Nyquist)) is sampled on a power-of-two grid of at least 2*num_detectors
/// points and inverted by a real DFT; filtering a detector row with this
/// kernel equals the zero-padded frequency-domain product exactly.
inline Tensor fbp_filter_kernel(std::size_t num_detectors, double detector_spacing,
                                const FbpConfig& cfg) {
    cfg.validate();
    std::size_t n = 1;
    while (n < 2 * num_detectors) n <<= 1;
    const auto nd = static_cast<double>(n);

    std::vector<double> symbol(n / 2 + 1, 0.0);
    for (std::size_t m = 1; m <= n / 2; ++m) {
        const double nu = static_cast<double>(m) / (nd * detector_spacing);
        const double nyquist = 1.0 / (2.0 * detector_spacing);
        const double x = nu / (cfg.cutoff * nyquist);
        if (x > 1.0) break;
        double w = 1.0;
        if (cfg.window == FilterWindow::hann) w = 0.5 * (1.0 + std::cos(M_PI * x));
        symbol[m] = nu * w;
    }

    Tensor kernel = Tensor::zeros({2 * num_detectors - 1});
    for (std::size_t i = 0; i < kernel.numel(); ++i) {
        const auto d = static_cast<double>(static_cast<std::ptrdiff_t>(i) -
                                           static_cast<std::ptrdiff_t>(num_detectors - 1));
        double acc = symbol[0];
        for (std::size_t m = 1; m < n / 2; ++m)
            acc += 2.0 * symbol[m] * std::cos(2.0 * M_PI * static_cast<double>(m) * d / nd);
        acc += symbol[n / 2] * std::cos(M_PI * d);
        kernel.data[i] = acc / nd;
    }
    return kernel;
}

/// Filtered back projection: per-angle ramp filtering of the detector rows
/// followed by the exact adjoint, scaled by pi / num_angles.
class FbpMethod final : public ReconMethod {
  public:
    FbpMethod(std::string id, const RadonOperator& op, FbpConfig cfg)
        : id_(std::move(id)), op_(&op), cfg_(cfg),
          kernel_(fbp_filter_kernel(op.geometry().num_detectors,
                                    op.geometry().detector_spacing, cfg)),
          center_(op.geometry().num_detectors - 1),
          scale_(M_PI / static_cast<double>(op.geometry().num_angles)) {}

    const std::string& id() const override { return id_; }
    const RadonOperator& op() const override { return *op_; }
    const FbpConfig& config() const { return cfg_; }

    Image reconstruct(const Sinogram& f) const override {
        const Geometry& g = op_->geometry();
        if (f.shape != std::vector<std::size_t>{g.num_angles, g.num_detectors})
            throw std::invalid_argument("fbp_reconstruct: sinogram shape mismatch");
        Sinogram filtered = ad::detail::correlate1d_rows(f, kernel_, center_);
        return scale_ * op_->adjoint(filtered);
    }

    ad::NodeId reconstruct_taped(ad::Tape& tape, ad::NodeId f_node) const override {
        const Geometry& g = op_->geometry();
        ad::NodeId filtered = tape.correlate1d(f_node, kernel_, center_);
        ad::NodeId back = tape.matvec(op_->matrix(), filtered,
                                      {g.image_height, g.image_width}, true);
        return tape.scale(scale_, back);
    }

  private:
    std::string id_;
    const RadonOperator* op_;
    FbpConfig cfg_;
    Tensor kernel_;
    std::size_t center_;
    double scale_;
};

inline Image fbp_reconstruct(const RadonOperator& op, const Sinogram& f,
                             const FbpConfig& cfg) {
    return FbpMethod("fbp", op, cfg).reconstruct(f);
}

}  // namespace ctb
