#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "qus/common.hpp"
#include "qus/dataset.hpp"

namespace qus::sim {

/// Physical/acquisition parameters of the simulated scan.
struct SimConfig {
  double phantom_width_mm = 30.0;   // lateral extent
  double phantom_depth_mm = 30.0;   // axial extent
  double center_freq_hz = 6.67e6;
  double sample_freq_hz = 100e6;    // fine simulation rate
  double downsample_freq_hz = 50e6; // RF output rate
  double sound_speed_m_s = 1540.0;
  double lateral_spacing_mm = 0.15625;  // A-line pitch (192 lines over 30 mm)
  double psf_axial_sigma_mm = 0.08;
  double psf_lateral_sigma_mm = 0.1435;
  bool depth_varying_psf = true;
  double focal_depth_mm = 15.0;
  double psf_depth_broadening = 0.8;  // fractional sigma growth at |d-df|=df
  int patch_rows = 256;
  int patch_cols = 32;

  void validate() const;
  double fine_axial_pitch_mm() const;  // c / (2 * sample_freq)
  double axial_pitch_mm() const;       // c / (2 * downsample_freq)
  int decimation_factor() const;
  /// PSF sigma scale factor at a given depth (1 at focus).
  double psf_scale(double depth_mm) const;
};

/// Dataset assembly parameters: phantom counts, split sizes, densities.
struct DatasetSpec {
  int fds_phantoms = 100;
  int lds_phantoms = 100;
  double val_phantom_fraction = 0.2;
  int test_fds_phantoms = 10;
  int test_lds_phantoms = 10;
  int train_patches = 5000;
  int val_patches = 1000;
  int test_patches = 500;
  double fds_density = 16.0;  // scatterers per resolution cell
  double lds_density = 2.0;
  double test_density_jitter = 0.1;  // +/- fraction, test phantoms only
  int frames = 2;                    // full envelope frames to emit

  void validate() const;
};

struct ScattererPhantom {
  std::vector<std::array<double, 2>> positions;  // (axial_mm, lateral_mm)
  std::vector<double> amplitudes;
  Label label = Label::Unknown;
  double density_per_rescell = 0.0;
  std::string id;
};

struct RFFrame {
  Grid2D<double> samples;     // rows = axial (downsampled), cols = A-lines
  double sample_freq_hz = 0;  // axial rate of `samples`
  double axial_pitch_mm = 0;
  double lateral_spacing_mm = 0;
};

struct ResolutionCellEstimate {
  double area_mm2 = 0;
  double axial_extent_mm = 0;   // -6 dB full width of the envelope ACF
  double lateral_extent_mm = 0;
  double depth_mm = 0;
};

/// -6 dB resolution cell area at the focus implied by the PSF sigmas.
double focal_rescell_area_mm2(const SimConfig& cfg);

/// Uniform scatterer positions with i.i.d. standard normal amplitudes.
/// Count = round(density * phantom_area / rescell_area_mm2). The label is
/// FDS when density >= 10, LDS otherwise.
ScattererPhantom generate_phantom(const SimConfig& cfg, double density,
                                  double rescell_area_mm2, Rng& rng);

/// Rasterize scatterers on the fine grid, convolve with the (optionally
/// depth-varying) separable Gaussian-cosine PSF, anti-alias filter and
/// decimate to the output rate.
RFFrame synthesize_rf(const ScattererPhantom& phantom, const SimConfig& cfg);

/// Per-A-line magnitude of the analytic signal.
Grid2D<double> compute_envelope(const RFFrame& rf);

/// -6 dB full widths of the field-correlation profile recovered from the
/// normalized, mean-removed envelope autocovariance around `depth_mm`
/// (square root of the autocovariance); area = pi/4 * w_axial * w_lateral.
ResolutionCellEstimate estimate_resolution_cell(const Grid2D<double>& envelope,
                                                const SimConfig& cfg,
                                                double depth_mm);

/// `count` patches at uniformly random in-bounds offsets.
std::vector<EnvelopePatch> extract_patches(const Grid2D<double>& envelope,
                                           const SimConfig& cfg, Label label,
                                           std::size_t count, Rng& rng,
                                           const std::string& source_id);

/// Runs the full simulation pipeline and writes a dataset directory
/// (manifest.json, train/val/test.qusp, frames.qusf). Splits are disjoint at
/// the phantom level; test phantoms get per-phantom density jitter.
data::Manifest build_dataset(const SimConfig& cfg, const DatasetSpec& spec,
                             std::uint64_t seed,
                             const std::filesystem::path& out_dir);

void to_json(data::json& j, const SimConfig& cfg);
void from_json(const data::json& j, SimConfig& cfg);
void to_json(data::json& j, const DatasetSpec& spec);
void from_json(const data::json& j, DatasetSpec& spec);

}  // namespace qus::sim
