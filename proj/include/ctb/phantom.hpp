#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctb/io.hpp"
#include "ctb/radon.hpp"
#include "ctb/rng.hpp"
#include "ctb/tensor.hpp"

namespace ctb {

/// One additive ellipse; center and semi-axes in normalized [-1,1] image
/// coordinates, rotation in radians.
struct Ellipse {
    double cx = 0.0, cy = 0.0;
    double ax = 0.5, ay = 0.5;
    double rot = 0.0;
    double value = 0.0;
};

enum class LesionLabel { benign, malignant };

/// Disk lesion with an optional irregular (lobulated) boundary. The label is
/// a deterministic function of (contrast, irregular): malignant iff the
/// contrast reaches the threshold and the boundary is irregular.
struct Lesion {
    std::size_t center_row = 0, center_col = 0;
    double radius_px = 4.0;
    double contrast = 0.3;
    bool irregular = false;
    double bump_amplitude = 0.35;  // radial modulation depth when irregular
    std::size_t bump_count = 5;
    double bump_phase = 0.0;

    static constexpr double kMalignantContrastThreshold = 0.25;

    LesionLabel label() const {
        return (contrast >= kMalignantContrastThreshold && irregular)
                   ? LesionLabel::malignant
                   : LesionLabel::benign;
    }
};

struct PhantomSpec {
    std::vector<Ellipse> ellipses;
    std::optional<Lesion> lesion;
};

/// Rasterizes a spec: sum of ellipse indicators plus the lesion disk,
/// clipped to [0,1]. Pixel (0,0) is the corner at minimal x and y.
inline Image render_phantom(const PhantomSpec& spec, const Geometry& g) {
    const std::size_t H = g.image_height, W = g.image_width;
    Image img = Tensor::zeros({H, W});
    const double sx = 2.0 / static_cast<double>(W);
    const double sy = 2.0 / static_cast<double>(H);
    for (const Ellipse& e : spec.ellipses) {
        if (e.ax <= 0.0 || e.ay <= 0.0) continue;  // degenerate, contributes nothing
        const double c = std::cos(e.rot), s = std::sin(e.rot);
        for (std::size_t i = 0; i < H; ++i) {
            const double y = (static_cast<double>(i) + 0.5) * sy - 1.0;
            for (std::size_t j = 0; j < W; ++j) {
                const double x = (static_cast<double>(j) + 0.5) * sx - 1.0;
                const double u = c * (x - e.cx) + s * (y - e.cy);
                const double v = -s * (x - e.cx) + c * (y - e.cy);
                if ((u * u) / (e.ax * e.ax) + (v * v) / (e.ay * e.ay) <= 1.0)
                    img.at(i, j) += e.value;
            }
        }
    }
    if (spec.lesion) {
        const Lesion& L = *spec.lesion;
        const auto reach = static_cast<std::ptrdiff_t>(
            std::ceil(L.radius_px * (1.0 + L.bump_amplitude) + 1.0));
        for (std::ptrdiff_t di = -reach; di <= reach; ++di)
            for (std::ptrdiff_t dj = -reach; dj <= reach; ++dj) {
                std::ptrdiff_t i = static_cast<std::ptrdiff_t>(L.center_row) + di;
                std::ptrdiff_t j = static_cast<std::ptrdiff_t>(L.center_col) + dj;
                if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(H) ||
                    j >= static_cast<std::ptrdiff_t>(W))
                    continue;
                const double r = std::sqrt(static_cast<double>(di * di + dj * dj));
                double rmax = L.radius_px;
                if (L.irregular) {
                    const double phi = std::atan2(static_cast<double>(di),
                                                  static_cast<double>(dj));
                    rmax *= 1.0 + L.bump_amplitude *
                                      std::cos(static_cast<double>(L.bump_count) * phi +
                                               L.bump_phase);
                }
                if (r <= rmax)
                    img.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +=
                        L.contrast;
            }
    }
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

/// Low-dose transmission simulation: per bin, sample
/// k ~ Poisson(N0 * exp(-f)) and return -log(max(k,1)/N0).
inline Sinogram simulate_low_dose(const Sinogram& f_clean, double photons_n0,
                                  std::uint64_t rng_seed) {
    if (photons_n0 < 1.0)
        throw std::invalid_argument("simulate_low_dose: photons_n0 must be >= 1");
    for (double v : f_clean.data)
        if (v < 0.0)
            throw std::invalid_argument("simulate_low_dose: negative sinogram entry");
    Rng rng(rng_seed);
    Sinogram out = f_clean;
    for (double& v : out.data) {
        const double mean = photons_n0 * std::exp(-v);
        const double k = static_cast<double>(poisson(rng, mean));
        v = -std::log(std::max(k, 1.0) / photons_n0);
    }
    return out;
}

struct LesionOptions {
    bool enabled = false;
    double radius_px = 4.0;
    std::size_t patch_side = 16;  // classifier patch; lesion stays inside it
    double contrast_lo = 0.12;
    double contrast_hi = 0.38;
};

/// Randomized chest-like phantom: body ellipse, two low-attenuation lungs,
/// a spine blob, a few random internal structures, and optionally a lesion
/// placed inside a lung with the patch fully interior to the image.
inline PhantomSpec random_chest_phantom(Rng& rng, const Geometry& g,
                                        const LesionOptions& lesion_opt) {
    PhantomSpec spec;
    auto jitter = [&](double v, double amp) { return v + uniform(rng, -amp, amp); };

    Ellipse body;
    body.cx = jitter(0.0, 0.04);
    body.cy = jitter(0.02, 0.04);
    body.ax = jitter(0.82, 0.05);
    body.ay = jitter(0.66, 0.05);
    body.rot = jitter(0.0, 0.05);
    body.value = jitter(0.45, 0.05);
    spec.ellipses.push_back(body);

    double lung_v = -jitter(0.30, 0.04);
    for (int side = -1; side <= 1; side += 2) {
        Ellipse lung;
        lung.cx = body.cx + side * jitter(0.38, 0.04);
        lung.cy = body.cy + jitter(-0.02, 0.04);
        lung.ax = jitter(0.26, 0.03);
        lung.ay = jitter(0.42, 0.04);
        lung.rot = side * jitter(0.18, 0.06);
        lung.value = lung_v;
        spec.ellipses.push_back(lung);
    }

    Ellipse spine;
    spine.cx = body.cx + jitter(0.0, 0.02);
    spine.cy = body.cy + jitter(0.5, 0.04);
    spine.ax = jitter(0.1, 0.02);
    spine.ay = jitter(0.12, 0.02);
    spine.rot = 0.0;
    spine.value = jitter(0.35, 0.05);
    spec.ellipses.push_back(spine);

    const int extras = 2 + static_cast<int>(uniform(rng, 0.0, 2.999));
    for (int k = 0; k < extras; ++k) {
        Ellipse e;
        e.cx = jitter(0.0, 0.35);
        e.cy = jitter(0.0, 0.3);
        e.ax = uniform(rng, 0.04, 0.14);
        e.ay = uniform(rng, 0.04, 0.14);
        e.rot = uniform(rng, 0.0, M_PI);
        e.value = uniform(rng, -0.08, 0.14);
        spec.ellipses.push_back(e);
    }

    if (lesion_opt.enabled) {
        Lesion L;
        L.radius_px = lesion_opt.radius_px;
        L.contrast = uniform(rng, lesion_opt.contrast_lo, lesion_opt.contrast_hi);
        L.irregular = uniform(rng, 0.0, 1.0) < 0.5;
        L.bump_phase = uniform(rng, 0.0, 2.0 * M_PI);
        // place inside a lung so the patch is fully interior
        const std::size_t margin = lesion_opt.patch_side / 2 + 2;
        const Ellipse& lung = spec.ellipses[1 + (uniform(rng, 0.0, 1.0) < 0.5 ? 0 : 1)];
        const double px = lung.cx + uniform(rng, -0.3, 0.3) * lung.ax;
        const double py = lung.cy + uniform(rng, -0.3, 0.3) * lung.ay;
        auto col = static_cast<std::ptrdiff_t>((px + 1.0) * 0.5 * g.image_width);
        auto row = static_cast<std::ptrdiff_t>((py + 1.0) * 0.5 * g.image_height);
        row = std::clamp<std::ptrdiff_t>(row, margin, g.image_height - 1 - margin);
        col = std::clamp<std::ptrdiff_t>(col, margin, g.image_width - 1 - margin);
        L.center_row = static_cast<std::size_t>(row);
        L.center_col = static_cast<std::size_t>(col);
        spec.lesion = L;
    }
    return spec;
}

struct Dataset {
    Geometry geometry;
    std::vector<PhantomSpec> specs;
    std::vector<Image> images;
    std::vector<Sinogram> sinograms_clean;
    std::vector<Sinogram> sinograms_noisy;
    std::uint64_t seed = 0;
    double photons_n0 = 4096.0;

    std::size_t size() const { return images.size(); }
};

/// Generates `count` samples; sample i uses the derived seed (seed XOR i),
/// so regeneration with the same seed is bitwise reproducible and samples
/// are independent of generation order.
inline Dataset generate_dataset(const RadonOperator& op, std::size_t count,
                                std::uint64_t seed, double photons_n0,
                                const LesionOptions& lesion_opt) {
    if (count == 0) throw std::invalid_argument("generate_dataset: empty dataset");
    Dataset ds;
    ds.geometry = op.geometry();
    ds.seed = seed;
    ds.photons_n0 = photons_n0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t si = seed ^ static_cast<std::uint64_t>(i);
        Rng rng(mix_seed(si, 0xA11CEull));
        PhantomSpec spec = random_chest_phantom(rng, op.geometry(), lesion_opt);
        Image img = render_phantom(spec, op.geometry());
        Sinogram clean = op.forward(img);
        Sinogram noisy = simulate_low_dose(clean, photons_n0, mix_seed(si, 0xD05Eull));
        ds.specs.push_back(std::move(spec));
        ds.images.push_back(std::move(img));
        ds.sinograms_clean.push_back(std::move(clean));
        ds.sinograms_noisy.push_back(std::move(noisy));
    }
    return ds;
}

namespace detail {

inline nlohmann::json spec_to_json(const PhantomSpec& s) {
    nlohmann::json j;
    j["ellipses"] = nlohmann::json::array();
    for (const Ellipse& e : s.ellipses)
        j["ellipses"].push_back({{"cx", e.cx}, {"cy", e.cy}, {"ax", e.ax}, {"ay", e.ay},
                                 {"rot", e.rot}, {"value", e.value}});
    if (s.lesion) {
        const Lesion& L = *s.lesion;
        j["lesion"] = {{"center_row", L.center_row}, {"center_col", L.center_col},
                       {"radius_px", L.radius_px},   {"contrast", L.contrast},
                       {"irregular", L.irregular},   {"bump_amplitude", L.bump_amplitude},
                       {"bump_count", L.bump_count}, {"bump_phase", L.bump_phase},
                       {"label", L.label() == LesionLabel::malignant ? "malignant" : "benign"}};
    }
    return j;
}

inline PhantomSpec spec_from_json(const nlohmann::json& j) {
    PhantomSpec s;
    for (const auto& je : j.at("ellipses")) {
        Ellipse e;
        e.cx = je.at("cx");
        e.cy = je.at("cy");
        e.ax = je.at("ax");
        e.ay = je.at("ay");
        e.rot = je.at("rot");
        e.value = je.at("value");
        s.ellipses.push_back(e);
    }
    if (j.contains("lesion")) {
        const auto& jl = j.at("lesion");
        Lesion L;
        L.center_row = jl.at("center_row");
        L.center_col = jl.at("center_col");
        L.radius_px = jl.at("radius_px");
        L.contrast = jl.at("contrast");
        L.irregular = jl.at("irregular");
        L.bump_amplitude = jl.at("bump_amplitude");
        L.bump_count = jl.at("bump_count");
        L.bump_phase = jl.at("bump_phase");
        s.lesion = L;
    }
    return s;
}

inline nlohmann::json geometry_to_json(const Geometry& g) {
    return {{"image_height", g.image_height},   {"image_width", g.image_width},
            {"pixel_spacing", g.pixel_spacing}, {"num_angles", g.num_angles},
            {"num_detectors", g.num_detectors}, {"detector_spacing", g.detector_spacing}};
}

inline Geometry geometry_from_json(const nlohmann::json& j) {
    Geometry g;
    g.image_height = j.at("image_height");
    g.image_width = j.at("image_width");
    g.pixel_spacing = j.at("pixel_spacing");
    g.num_angles = j.at("num_angles");
    g.num_detectors = j.at("num_detectors");
    g.detector_spacing = j.at("detector_spacing");
    return g;
}

}  // namespace detail

/// Writes a dataset directory: one CTB1 file per array plus dataset.json
/// listing samples, specs and seeds.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json sidecar;
    sidecar["format"] = "ctbench-dataset-v1";
    sidecar["seed"] = ds.seed;
    sidecar["photons_n0"] = ds.photons_n0;
    sidecar["count"] = ds.size();
    sidecar["geometry"] = detail::geometry_to_json(ds.geometry);
    sidecar["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "%04zu", i);
        const std::string img = "image_" + std::string(tag) + ".ctb";
        const std::string cln = "sino_clean_" + std::string(tag) + ".ctb";
        const std::string nsy = "sino_noisy_" + std::string(tag) + ".ctb";
        ctb1::write_file(dir / img, ds.images[i]);
        ctb1::write_file(dir / cln, ds.sinograms_clean[i]);
        ctb1::write_file(dir / nsy, ds.sinograms_noisy[i]);
        nlohmann::json js;
        js["image"] = img;
        js["sino_clean"] = cln;
        js["sino_noisy"] = nsy;
        js["spec"] = detail::spec_to_json(ds.specs[i]);
        sidecar["samples"].push_back(js);
    }
    std::ofstream f(dir / "dataset.json", std::ios::trunc);
    if (!f) throw std::runtime_error("save_dataset: cannot write sidecar");
    f << sidecar.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "dataset.json");
    if (!f) throw std::runtime_error("load_dataset: missing dataset.json in " + dir.string());
    nlohmann::json sidecar = nlohmann::json::parse(f);
    Dataset ds;
    ds.seed = sidecar.at("seed");
    ds.photons_n0 = sidecar.at("photons_n0");
    ds.geometry = detail::geometry_from_json(sidecar.at("geometry"));
    for (const auto& js : sidecar.at("samples")) {
        ds.images.push_back(ctb1::read_file(dir / js.at("image").get<std::string>()));
        ds.sinograms_clean.push_back(
            ctb1::read_file(dir / js.at("sino_clean").get<std::string>()));
        ds.sinograms_noisy.push_back(
            ctb1::read_file(dir / js.at("sino_noisy").get<std::string>()));
        ds.specs.push_back(detail::spec_from_json(js.at("spec")));
    }
    if (ds.size() != sidecar.at("count").get<std::size_t>())
        throw std::runtime_error("load_dataset: sample count mismatch");
    return ds;
}

}  // namespace ctb
