#include "qus/specklesim.hpp"

#include <algorithm>
#include <cmath>

#include "qus/fft.hpp"

namespace qus::sim {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void SimConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InvalidArgument(std::string("sim config: ") + name + " must be positive");
  };
  positive(phantom_width_mm, "phantom_width_mm");
  positive(phantom_depth_mm, "phantom_depth_mm");
  positive(center_freq_hz, "center_freq_hz");
  positive(sample_freq_hz, "sample_freq_hz");
  positive(downsample_freq_hz, "downsample_freq_hz");
  positive(sound_speed_m_s, "sound_speed_m_s");
  positive(lateral_spacing_mm, "lateral_spacing_mm");
  positive(psf_axial_sigma_mm, "psf_axial_sigma_mm");
  positive(psf_lateral_sigma_mm, "psf_lateral_sigma_mm");
  positive(focal_depth_mm, "focal_depth_mm");
  if (psf_depth_broadening < 0.0)
    throw InvalidArgument("sim config: psf_depth_broadening must be >= 0");
  if (patch_rows < 2 || patch_cols < 2)
    throw InvalidArgument("sim config: patch dimensions must be >= 2");
  const double ratio = sample_freq_hz / downsample_freq_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
    throw InvalidArgument("sim config: sample rate must be an integer multiple of the output rate");
  if (downsample_freq_hz <= 2.0 * center_freq_hz)
    throw InvalidArgument("sim config: output rate must exceed twice the center frequency");
}

double SimConfig::fine_axial_pitch_mm() const {
  return sound_speed_m_s * 1e3 / (2.0 * sample_freq_hz);
}

double SimConfig::axial_pitch_mm() const {
  return sound_speed_m_s * 1e3 / (2.0 * downsample_freq_hz);
}

int SimConfig::decimation_factor() const {
  return static_cast<int>(std::llround(sample_freq_hz / downsample_freq_hz));
}

double SimConfig::psf_scale(double depth_mm) const {
  if (!depth_varying_psf) return 1.0;
  return 1.0 + psf_depth_broadening * std::abs(depth_mm - focal_depth_mm) / focal_depth_mm;
}

void DatasetSpec::validate() const {
  if (fds_phantoms < 1 || lds_phantoms < 1)
    throw InvalidArgument("dataset spec: need at least one phantom per class");
  if (test_fds_phantoms < 1 || test_lds_phantoms < 1)
    throw InvalidArgument("dataset spec: need at least one test phantom per class");
  if (!(val_phantom_fraction > 0.0 && val_phantom_fraction < 1.0))
    throw InvalidArgument("dataset spec: val_phantom_fraction must be in (0, 1)");
  if (train_patches < 2 || val_patches < 2 || test_patches < 2)
    throw InvalidArgument("dataset spec: each split needs at least 2 patches");
  if (!(fds_density >= 10.0))
    throw InvalidArgument("dataset spec: fds_density must be >= 10");
  if (!(lds_density > 0.0 && lds_density < 10.0))
    throw InvalidArgument("dataset spec: lds_density must be in (0, 10)");
  if (test_density_jitter < 0.0 || test_density_jitter >= 1.0)
    throw InvalidArgument("dataset spec: test_density_jitter must be in [0, 1)");
  if (frames < 0) throw InvalidArgument("dataset spec: frames must be >= 0");
}

double focal_rescell_area_mm2(const SimConfig& cfg) {
  // -6 dB full width of a Gaussian envelope is 4*sigma*sqrt(ln 2) per axis;
  // ellipse area = pi/4 * w_ax * w_lat.
  const double w_ax = 4.0 * cfg.psf_axial_sigma_mm * std::sqrt(M_LN2);
  const double w_lat = 4.0 * cfg.psf_lateral_sigma_mm * std::sqrt(M_LN2);
  return M_PI / 4.0 * w_ax * w_lat;
}

// ---------------------------------------------------------------------------
// Phantom generation
// ---------------------------------------------------------------------------

ScattererPhantom generate_phantom(const SimConfig& cfg, double density,
                                  double rescell_area_mm2, Rng& rng) {
  cfg.validate();
  if (!(density > 0.0)) throw InvalidArgument("generate_phantom: density must be positive");
  if (!(rescell_area_mm2 > 0.0))
    throw InvalidArgument("generate_phantom: rescell area must be positive");
  const double area = cfg.phantom_width_mm * cfg.phantom_depth_mm;
  const auto n = static_cast<std::size_t>(std::llround(density * area / rescell_area_mm2));
  if (n == 0) throw InvalidArgument("generate_phantom: configuration yields zero scatterers");
  ScattererPhantom p;
  p.positions.resize(n);
  p.amplitudes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.positions[i][0] = rng.uniform(0.0, cfg.phantom_depth_mm);
    p.positions[i][1] = rng.uniform(0.0, cfg.phantom_width_mm);
    p.amplitudes[i] = rng.normal();
  }
  p.label = density >= 10.0 ? Label::FDS : Label::LDS;
  p.density_per_rescell = density;
  return p;
}

// ---------------------------------------------------------------------------
// RF synthesis: rasterize -> separable PSF convolution -> anti-alias ->
// decimate.
// ---------------------------------------------------------------------------

namespace {

// One second-order section (direct form II transposed).
struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;
  double step(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

// 8th-order Butterworth lowpass as a cascade of 4 biquads (bilinear
// transform with prewarped cutoff). fc_norm = cutoff / sample_rate.
std::array<Biquad, 4> butterworth8(double fc_norm) {
  // Section quality factors: Q_k = 1 / (2 sin((2k-1) pi / 16)), k = 1..4.
  static const double kQ[4] = {
      1.0 / (2.0 * std::sin(M_PI / 16.0)), 1.0 / (2.0 * std::sin(3.0 * M_PI / 16.0)),
      1.0 / (2.0 * std::sin(5.0 * M_PI / 16.0)), 1.0 / (2.0 * std::sin(7.0 * M_PI / 16.0))};
  std::array<Biquad, 4> sos{};
  const double k = std::tan(M_PI * fc_norm);
  for (int i = 0; i < 4; ++i) {
    const double q = kQ[i];
    const double norm = 1.0 / (1.0 + k / q + k * k);
    sos[i].b0 = k * k * norm;
    sos[i].b1 = 2.0 * sos[i].b0;
    sos[i].b2 = sos[i].b0;
    sos[i].a1 = 2.0 * (k * k - 1.0) * norm;
    sos[i].a2 = (1.0 - k / q + k * k) * norm;
  }
  return sos;
}

}  // namespace

RFFrame synthesize_rf(const ScattererPhantom& phantom, const SimConfig& cfg) {
  cfg.validate();
  if (phantom.positions.empty())
    throw InvalidArgument("synthesize_rf: phantom has no scatterers");
  if (phantom.positions.size() != phantom.amplitudes.size())
    throw InvalidArgument("synthesize_rf: position/amplitude size mismatch");

  const double fine_pitch = cfg.fine_axial_pitch_mm();
  const int rows = static_cast<int>(std::llround(cfg.phantom_depth_mm / fine_pitch));
  const int cols = static_cast<int>(std::llround(cfg.phantom_width_mm / cfg.lateral_spacing_mm));
  if (rows < 16 || cols < 2) throw InvalidArgument("synthesize_rf: grid too small");

  // Nearest-neighbor rasterization of scatterer amplitudes.
  Grid2D<double> fine(rows, cols);
  for (std::size_t i = 0; i < phantom.positions.size(); ++i) {
    const double ax = phantom.positions[i][0];
    const double lat = phantom.positions[i][1];
    if (ax < 0.0 || ax > cfg.phantom_depth_mm || lat < 0.0 || lat > cfg.phantom_width_mm)
      throw InvalidArgument("synthesize_rf: scatterer outside phantom bounds");
    int r = static_cast<int>(std::llround(ax / fine_pitch));
    int c = static_cast<int>(std::llround(lat / cfg.lateral_spacing_mm));
    r = std::clamp(r, 0, rows - 1);
    c = std::clamp(c, 0, cols - 1);
    fine(r, c) += phantom.amplitudes[i];
  }

  // Axial convolution with the Gaussian-cosine pulse. The kernel varies with
  // depth, so each output row gets its own taps.
  const double carrier_cyc_mm = 2.0 * cfg.center_freq_hz / (cfg.sound_speed_m_s * 1e3);
  Grid2D<double> axial(rows, cols);
  std::vector<double> taps;
  for (int r = 0; r < rows; ++r) {
    const double depth = r * fine_pitch;
    const double sigma = cfg.psf_axial_sigma_mm * cfg.psf_scale(depth);
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma / fine_pitch)));
    taps.resize(2 * half + 1);
    for (int k = -half; k <= half; ++k) {
      const double d = k * fine_pitch;
      taps[k + half] = std::exp(-d * d / (2.0 * sigma * sigma)) *
                       std::cos(2.0 * M_PI * carrier_cyc_mm * d);
    }
    double* out = &axial(r, 0);
    for (int k = -half; k <= half; ++k) {
      const int src = r + k;
      if (src < 0 || src >= rows) continue;
      const double w = taps[k + half];
      const double* in = &fine(src, 0);
      for (int c = 0; c < cols; ++c) out[c] += w * in[c];
    }
  }

  // Lateral Gaussian convolution, also depth-varying.
  Grid2D<double> rf(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const double depth = r * fine_pitch;
    const double sigma = cfg.psf_lateral_sigma_mm * cfg.psf_scale(depth);
    const int half =
        std::max(1, static_cast<int>(std::ceil(4.0 * sigma / cfg.lateral_spacing_mm)));
    taps.resize(2 * half + 1);
    for (int k = -half; k <= half; ++k) {
      const double d = k * cfg.lateral_spacing_mm;
      taps[k + half] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double* in = &axial(r, 0);
    double* out = &rf(r, 0);
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      const int klo = std::max(-half, -c);
      const int khi = std::min(half, cols - 1 - c);
      for (int k = klo; k <= khi; ++k) acc += taps[k + half] * in[c + k];
      out[c] = acc;
    }
  }

  // Anti-alias lowpass along depth, then decimate.
  const int decim = cfg.decimation_factor();
  const int out_rows = (rows - 1) / decim + 1;
  RFFrame frame;
  frame.samples = Grid2D<double>(out_rows, cols);
  frame.sample_freq_hz = cfg.downsample_freq_hz;
  frame.axial_pitch_mm = cfg.axial_pitch_mm();
  frame.lateral_spacing_mm = cfg.lateral_spacing_mm;
  if (decim == 1) {
    frame.samples = std::move(rf);
    return frame;
  }
  const double fc_norm = 0.45 * (0.5 / decim);  // fraction of the fine rate
  for (int c = 0; c < cols; ++c) {
    auto sos = butterworth8(fc_norm);
    for (int r = 0; r < rows; ++r) {
      double x = rf(r, c);
      for (auto& s : sos) x = s.step(x);
      rf(r, c) = x;
    }
    for (int r = 0; r < out_rows; ++r) frame.samples(r, c) = rf(r * decim, c);
  }
  return frame;
}

Grid2D<double> compute_envelope(const RFFrame& rf) {
  const int rows = rf.samples.rows, cols = rf.samples.cols;
  if (rows < 8) throw InvalidArgument("compute_envelope: A-lines need at least 8 samples");
  Fft plan(static_cast<std::size_t>(rows));
  Grid2D<double> env(rows, cols);
  std::vector<std::complex<double>> buf(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) buf[r] = {rf.samples(r, c), 0.0};
    plan.forward(buf.data());
    for (int k = 1; k < (rows + 1) / 2; ++k) buf[k] *= 2.0;
    for (int k = rows / 2 + 1; k < rows; ++k) buf[k] = {0.0, 0.0};
    plan.inverse(buf.data());
    for (int r = 0; r < rows; ++r) env(r, c) = std::abs(buf[r]);
  }
  return env;
}

// ---------------------------------------------------------------------------
// Resolution cell estimation from the envelope autocorrelation
// ---------------------------------------------------------------------------

namespace {

// First -6 dB (half-maximum) crossing of a normalized ACF profile, in lags.
double half_crossing(std::span<const double> acf) {
  for (std::size_t k = 1; k < acf.size(); ++k) {
    if (acf[k] < 0.5) {
      const double frac = (acf[k - 1] - 0.5) / (acf[k - 1] - acf[k]);
      return static_cast<double>(k - 1) + frac;
    }
  }
  throw NumericFailure("estimate_resolution_cell: autocorrelation never falls below half maximum");
}

}  // namespace

ResolutionCellEstimate estimate_resolution_cell(const Grid2D<double>& envelope,
                                                const SimConfig& cfg,
                                                double depth_mm) {
  cfg.validate();
  const double pitch = cfg.axial_pitch_mm();
  const int rows = envelope.rows, cols = envelope.cols;
  const int center = static_cast<int>(std::llround(depth_mm / pitch));
  const int half_win = 64;
  const int r0 = std::max(0, center - half_win);
  const int r1 = std::min(rows, center + half_win + 1);
  const int region_rows = r1 - r0;
  if (region_rows < 64 || cols < 16)
    throw InvalidArgument("estimate_resolution_cell: region around depth is smaller than 64x16");

  // Mean-removed region.
  Grid2D<double> x(region_rows, cols);
  double mean = 0.0;
  for (int r = 0; r < region_rows; ++r)
    for (int c = 0; c < cols; ++c) mean += envelope(r0 + r, c);
  mean /= static_cast<double>(x.size());
  for (int r = 0; r < region_rows; ++r)
    for (int c = 0; c < cols; ++c) x(r, c) = envelope(r0 + r, c) - mean;

  double norm = 0.0;
  for (double v : x.data) norm += v * v;
  if (!(norm > 0.0))
    throw DegenerateStatistic("estimate_resolution_cell: constant envelope region");

  // The envelope autocovariance of speckle is (to first order) the squared
  // magnitude of the underlying field correlation; taking the square root
  // recovers the field-correlation profile whose -6 dB width defines the
  // cell. Negative tail lags clip to zero before the root.
  const int max_lag_a = std::min(region_rows - 1, region_rows / 2);
  const int max_lag_l = std::min(cols - 1, cols / 2);
  std::vector<double> acf_a(max_lag_a + 1), acf_l(max_lag_l + 1);
  for (int d = 0; d <= max_lag_a; ++d) {
    double s = 0.0;
    for (int r = 0; r + d < region_rows; ++r)
      for (int c = 0; c < cols; ++c) s += x(r, c) * x(r + d, c);
    acf_a[d] = std::sqrt(std::max(s / norm, 0.0));
  }
  for (int d = 0; d <= max_lag_l; ++d) {
    double s = 0.0;
    for (int r = 0; r < region_rows; ++r)
      for (int c = 0; c + d < cols; ++c) s += x(r, c) * x(r, c + d);
    acf_l[d] = std::sqrt(std::max(s / norm, 0.0));
  }

  ResolutionCellEstimate est;
  est.axial_extent_mm = 2.0 * half_crossing(acf_a) * pitch;
  est.lateral_extent_mm = 2.0 * half_crossing(acf_l) * cfg.lateral_spacing_mm;
  est.area_mm2 = M_PI / 4.0 * est.axial_extent_mm * est.lateral_extent_mm;
  est.depth_mm = depth_mm;
  return est;
}

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

std::vector<EnvelopePatch> extract_patches(const Grid2D<double>& envelope,
                                           const SimConfig& cfg, Label label,
                                           std::size_t count, Rng& rng,
                                           const std::string& source_id) {
  if (count == 0) throw InvalidArgument("extract_patches: count must be >= 1");
  if (label != Label::LDS && label != Label::FDS)
    throw InvalidArgument("extract_patches: label must be LDS or FDS");
  const int pr = cfg.patch_rows, pc = cfg.patch_cols;
  if (envelope.rows < pr || envelope.cols < pc)
    throw InvalidArgument("extract_patches: envelope grid smaller than patch");
  const int max_r = envelope.rows - pr;
  const int max_c = envelope.cols - pc;
  std::vector<EnvelopePatch> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int r0 = static_cast<int>(rng.index(static_cast<std::size_t>(max_r) + 1));
    const int c0 = static_cast<int>(rng.index(static_cast<std::size_t>(max_c) + 1));
    auto& p = out[i];
    p.rows = pr;
    p.cols = pc;
    p.values.resize(static_cast<std::size_t>(pr) * pc);
    for (int r = 0; r < pr; ++r)
      for (int c = 0; c < pc; ++c) p.at(r, c) = envelope(r0 + r, c0 + c);
    p.label = label;
    p.depth_mm = r0 * cfg.axial_pitch_mm();
    p.source_id = source_id;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

namespace {

struct PhantomJob {
  std::string id;
  double density;
  std::uint64_t stream;
  std::size_t quota;  // patches to extract
};

// Spread `total` patches over `n` phantoms as evenly as possible.
std::vector<std::size_t> spread(std::size_t total, std::size_t n) {
  std::vector<std::size_t> q(n, total / n);
  for (std::size_t i = 0; i < total % n; ++i) ++q[i];
  return q;
}

}  // namespace

data::Manifest build_dataset(const SimConfig& cfg, const DatasetSpec& spec,
                             std::uint64_t seed,
                             const std::filesystem::path& out_dir) {
  cfg.validate();
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  const double rescell = focal_rescell_area_mm2(cfg);
  const Rng master(seed);
  std::uint64_t stream = 0;

  data::Manifest m;
  m.seed = seed;
  m.patch_rows = cfg.patch_rows;
  m.patch_cols = cfg.patch_cols;
  m.axial_pitch_mm = cfg.axial_pitch_mm();
  m.lateral_pitch_mm = cfg.lateral_spacing_mm;
  m.rescell_area_mm2 = rescell;
  {
    data::json config;
    data::json sim_json;
    to_json(sim_json, cfg);
    data::json spec_json;
    to_json(spec_json, spec);
    config["sim"] = sim_json;
    config["dataset"] = spec_json;
    m.config = config;
    data::json ident;
    ident["seed"] = seed;
    ident["config"] = config;
    const std::string s = ident.dump();
    m.dataset_id = data::hash_hex(
        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  // Source ids carry the dataset id so that phantom provenance stays unique
  // across datasets (the fine-tune leakage check relies on this).
  const std::string src_prefix = m.dataset_id.substr(0, 8) + "-";

  // Phantom-level split layout. Validation phantoms are the tail of each
  // class list; test phantoms are generated separately with density jitter.
  const auto n_val_fds = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.fds_phantoms * spec.val_phantom_fraction)));
  const auto n_val_lds = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.lds_phantoms * spec.val_phantom_fraction)));
  if (n_val_fds >= static_cast<std::size_t>(spec.fds_phantoms) ||
      n_val_lds >= static_cast<std::size_t>(spec.lds_phantoms))
    throw InvalidArgument("build_dataset: not enough phantoms for a train/val split");
  const std::size_t n_train_fds = spec.fds_phantoms - n_val_fds;
  const std::size_t n_train_lds = spec.lds_phantoms - n_val_lds;

  struct SplitPlan {
    std::string name;
    std::vector<PhantomJob> jobs;
  };
  auto plan_split = [&](const std::string& name, std::size_t n_patches,
                        std::size_t fds_ph, std::size_t lds_ph, bool jitter) {
    SplitPlan plan;
    plan.name = name;
    const std::size_t fds_patches = (n_patches + 1) / 2;
    const std::size_t lds_patches = n_patches - fds_patches;
    auto add_jobs = [&](const char* cls, double density, std::size_t n_ph,
                        std::size_t total) {
      const auto quotas = spread(total, n_ph);
      for (std::size_t i = 0; i < n_ph; ++i) {
        PhantomJob job;
        job.id = src_prefix + name + "-" + cls + "-" + std::to_string(i);
        job.density = density;
        job.stream = stream++;
        job.quota = quotas[i];
        if (jitter && spec.test_density_jitter > 0.0) {
          Rng jr = master.fork(job.stream);
          job.density *= 1.0 + spec.test_density_jitter * jr.uniform(-1.0, 1.0);
        }
        plan.jobs.push_back(std::move(job));
      }
    };
    add_jobs("fds", spec.fds_density, fds_ph, fds_patches);
    add_jobs("lds", spec.lds_density, lds_ph, lds_patches);
    return plan;
  };

  const SplitPlan plans[3] = {
      plan_split("train", spec.train_patches, n_train_fds, n_train_lds, false),
      plan_split("val", spec.val_patches, n_val_fds, n_val_lds, false),
      plan_split("test", spec.test_patches, spec.test_fds_phantoms,
                 spec.test_lds_phantoms, true),
  };

  for (const auto& plan : plans) {
    std::vector<EnvelopePatch> patches;
    data::SplitRecord rec;
    rec.file = plan.name + ".qusp";
    for (const auto& job : plan.jobs) {
      if (job.quota == 0) continue;
      Rng rng = master.fork(job.stream);
      if (plan.name == "test" && spec.test_density_jitter > 0.0)
        (void)rng.uniform(-1.0, 1.0);  // consume the jitter draw
      ScattererPhantom ph = generate_phantom(cfg, job.density, rescell, rng);
      ph.id = job.id;
      const RFFrame rf = synthesize_rf(ph, cfg);
      const Grid2D<double> env = compute_envelope(rf);
      auto extracted = extract_patches(env, cfg, ph.label, job.quota, rng, ph.id);
      const auto src_index = static_cast<std::uint32_t>(rec.sources.size());
      rec.sources.push_back(job.id);
      for (auto& p : extracted) {
        rec.patch_source.push_back(src_index);
        if (p.label == Label::FDS)
          ++rec.n_fds;
        else
          ++rec.n_lds;
        patches.push_back(std::move(p));
      }
    }
    rec.count = patches.size();
    data::write_patches(out_dir / rec.file, patches);
    m.splits[plan.name] = std::move(rec);
  }

  if (spec.frames > 0) {
    data::FramesRecord fr;
    fr.file = "frames.qusf";
    std::vector<Grid2D<double>> frames;
    for (int k = 0; k < spec.frames; ++k) {
      const bool fds = (k % 2 == 0);
      Rng rng = master.fork(stream++);
      ScattererPhantom ph = generate_phantom(
          cfg, fds ? spec.fds_density : spec.lds_density, rescell, rng);
      ph.id = src_prefix + "frame-" + std::to_string(k);
      const RFFrame rf = synthesize_rf(ph, cfg);
      frames.push_back(compute_envelope(rf));
      fr.labels.push_back(ph.label);
      fr.sources.push_back(ph.id);
    }
    fr.rows = frames[0].rows;
    fr.cols = frames[0].cols;
    data::write_frames(out_dir / fr.file, frames, fr.labels);
    m.frames = std::move(fr);
  }

  data::write_manifest(out_dir / "manifest.json", m);
  return m;
}

// ---------------------------------------------------------------------------
// JSON round-trips for the configuration structs
// ---------------------------------------------------------------------------

void to_json(data::json& j, const SimConfig& cfg) {
  j = data::json{};
  j["phantom_width_mm"] = cfg.phantom_width_mm;
  j["phantom_depth_mm"] = cfg.phantom_depth_mm;
  j["center_freq_hz"] = cfg.center_freq_hz;
  j["sample_freq_hz"] = cfg.sample_freq_hz;
  j["downsample_freq_hz"] = cfg.downsample_freq_hz;
  j["sound_speed_m_s"] = cfg.sound_speed_m_s;
  j["lateral_spacing_mm"] = cfg.lateral_spacing_mm;
  j["psf_axial_sigma_mm"] = cfg.psf_axial_sigma_mm;
  j["psf_lateral_sigma_mm"] = cfg.psf_lateral_sigma_mm;
  j["depth_varying_psf"] = cfg.depth_varying_psf;
  j["focal_depth_mm"] = cfg.focal_depth_mm;
  j["psf_depth_broadening"] = cfg.psf_depth_broadening;
  j["patch_rows"] = cfg.patch_rows;
  j["patch_cols"] = cfg.patch_cols;
}

namespace {

template <class T>
void maybe(const data::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void from_json(const data::json& j, SimConfig& cfg) {
  maybe(j, "phantom_width_mm", cfg.phantom_width_mm);
  maybe(j, "phantom_depth_mm", cfg.phantom_depth_mm);
  maybe(j, "center_freq_hz", cfg.center_freq_hz);
  maybe(j, "sample_freq_hz", cfg.sample_freq_hz);
  maybe(j, "downsample_freq_hz", cfg.downsample_freq_hz);
  maybe(j, "sound_speed_m_s", cfg.sound_speed_m_s);
  maybe(j, "lateral_spacing_mm", cfg.lateral_spacing_mm);
  maybe(j, "psf_axial_sigma_mm", cfg.psf_axial_sigma_mm);
  maybe(j, "psf_lateral_sigma_mm", cfg.psf_lateral_sigma_mm);
  maybe(j, "depth_varying_psf", cfg.depth_varying_psf);
  maybe(j, "focal_depth_mm", cfg.focal_depth_mm);
  maybe(j, "psf_depth_broadening", cfg.psf_depth_broadening);
  maybe(j, "patch_rows", cfg.patch_rows);
  maybe(j, "patch_cols", cfg.patch_cols);
}

void to_json(data::json& j, const DatasetSpec& spec) {
  j = data::json{};
  j["fds_phantoms"] = spec.fds_phantoms;
  j["lds_phantoms"] = spec.lds_phantoms;
  j["val_phantom_fraction"] = spec.val_phantom_fraction;
  j["test_fds_phantoms"] = spec.test_fds_phantoms;
  j["test_lds_phantoms"] = spec.test_lds_phantoms;
  j["train_patches"] = spec.train_patches;
  j["val_patches"] = spec.val_patches;
  j["test_patches"] = spec.test_patches;
  j["fds_density"] = spec.fds_density;
  j["lds_density"] = spec.lds_density;
  j["test_density_jitter"] = spec.test_density_jitter;
  j["frames"] = spec.frames;
}

void from_json(const data::json& j, DatasetSpec& spec) {
  maybe(j, "fds_phantoms", spec.fds_phantoms);
  maybe(j, "lds_phantoms", spec.lds_phantoms);
  maybe(j, "val_phantom_fraction", spec.val_phantom_fraction);
  maybe(j, "test_fds_phantoms", spec.test_fds_phantoms);
  maybe(j, "test_lds_phantoms", spec.test_lds_phantoms);
  maybe(j, "train_patches", spec.train_patches);
  maybe(j, "val_patches", spec.val_patches);
  maybe(j, "test_patches", spec.test_patches);
  maybe(j, "fds_density", spec.fds_density);
  maybe(j, "lds_density", spec.lds_density);
  maybe(j, "test_density_jitter", spec.test_density_jitter);
  maybe(j, "frames", spec.frames);
}

}  // namespace qus::sim
