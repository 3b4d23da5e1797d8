#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "locrel/errors.hpp"
#include "locrel/fft.hpp"
#include "locrel/rng.hpp"
#include "locrel/tensor.hpp"

namespace locrel {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Shoebox room with a target reverberation time. Uniform wall absorption
/// derived from T60 (Eyring by default; Sabine available, which can declare
/// short T60s unreachable).
struct RoomSpec {
  double lx = 3.6, ly = 8.2, lz = 2.4;  // meters
  double target_t60 = 0.3;              // seconds
  double speed_of_sound = 343.0;        // m/s
  double sample_rate = 16000.0;         // Hz
  enum class Absorption { Eyring, Sabine };
  Absorption absorption = Absorption::Eyring;

  void check() const {
    if (lx <= 0 || ly <= 0 || lz <= 0) throw ConfigError("room: dimensions must be positive");
    if (target_t60 < 0) throw ConfigError("room: negative T60");
    if (sample_rate <= 0 || speed_of_sound <= 0) throw ConfigError("room: bad rates");
  }

  bool contains(const Vec3& p) const {
    return p.x > 0 && p.x < lx && p.y > 0 && p.y < ly && p.z > 0 && p.z < lz;
  }

  double volume() const { return lx * ly * lz; }
  double surface() const { return 2.0 * (lx * ly + lx * lz + ly * lz); }
};

/// Uniform wall reflection coefficient for the target T60.
inline double reflection_coefficient(const RoomSpec& room) {
  if (room.target_t60 == 0.0) return 0.0;
  const double k = 0.161 * room.volume() / (room.surface() * room.target_t60);
  double alpha;
  if (room.absorption == RoomSpec::Absorption::Sabine) {
    alpha = k;
    if (alpha > 1.0)
      throw ConfigError("room: target T60 unreachable for this geometry (reflection coefficient would exceed 1)");
  } else {
    alpha = 1.0 - std::exp(-k);
  }
  return std::sqrt(1.0 - alpha);
}

struct ArrayGeometry {
  std::vector<Vec3> mics;

  static ArrayGeometry ula(size_t n, double spacing, double x0, double y, double z) {
    ArrayGeometry a;
    for (size_t i = 0; i < n; ++i) a.mics.push_back({x0 + spacing * static_cast<double>(i), y, z});
    return a;
  }

  // the 16-microphone line used throughout: y = 7 m, z = 1.2 m, x from 0.575 m
  static ArrayGeometry default_ula16(double spacing = 0.15) { return ula(16, spacing, 0.575, 7.0, 1.2); }

  void check(const RoomSpec& room) const {
    if (mics.empty()) throw ConfigError("array: no microphones");
    for (size_t i = 0; i < mics.size(); ++i) {
      if (!room.contains(mics[i])) throw ConfigError("array: microphone " + std::to_string(i) + " outside the room");
      for (size_t j = i + 1; j < mics.size(); ++j)
        if (distance(mics[i], mics[j]) == 0.0) throw ConfigError("array: duplicate microphone positions");
    }
  }
};

struct Scene {
  RoomSpec room;
  ArrayGeometry array;
  Vec3 source;
  std::vector<double> signal;  // mono source samples at room.sample_rate
  double snr_db = std::numeric_limits<double>::infinity();
  uint64_t noise_seed = 0;
};

struct IsmParams {
  size_t sinc_taps = 81;         // Hann-windowed sinc for fractional delays
  double decay_range_db = 40.0;  // RIR length covers this much decay
  int max_order = -1;            // -1: derived from the decay range
  double beta_override = -1.0;   // >=0 replaces the formula-derived coefficient
};

namespace ism_detail {

inline void add_arrival(std::vector<double>& h, double delay, double amp, size_t taps) {
  const long half = static_cast<long>(taps / 2);
  const long center = std::lround(delay);
  const long t0 = center - half;
  const long t1 = center + half;
  // sin(pi*(m - delay)) alternates sign with m; one evaluation serves all taps
  const double s_base = std::sin(std::numbers::pi * (static_cast<double>(t0) - delay));
  double sign = 1.0;
  // Hann window over u in [-taps/2, taps/2] via rotation recurrence
  const double dtheta = 2.0 * std::numbers::pi / static_cast<double>(taps);
  double theta = dtheta * (static_cast<double>(t0) - delay);
  double c = std::cos(theta), s = std::sin(theta);
  const double cd = std::cos(dtheta), sd = std::sin(dtheta);
  for (long m = t0; m <= t1; ++m) {
    const double u = static_cast<double>(m) - delay;
    if (m >= 0 && m < static_cast<long>(h.size()) && std::abs(u) <= static_cast<double>(taps) / 2.0) {
      double sinc;
      if (std::abs(u) < 1e-12) {
        sinc = 1.0;
      } else {
        sinc = sign * s_base / (std::numbers::pi * u);
      }
      const double w = 0.5 * (1.0 + c);
      h[static_cast<size_t>(m)] += amp * w * sinc;
    }
    sign = -sign;
    const double cn = c * cd - s * sd;
    s = s * cd + c * sd;
    c = cn;
  }
}

}  // namespace ism_detail

/// Image-source RIR between one source and one microphone. Direct path
/// arrives at distance/c with 1/(4*pi*distance) scaling; each image is
/// attenuated by beta^(reflection count) and written through a windowed
/// sinc so fractional delays land within half a sample.
inline std::vector<double> simulate_rir(const RoomSpec& room, const Vec3& source, const Vec3& mic,
                                        const IsmParams& params = {}) {
  room.check();
  if (!room.contains(source)) throw ConfigError("simulate_rir: source on or outside a wall");
  if (!room.contains(mic)) throw ConfigError("simulate_rir: microphone on or outside a wall");

  const double beta = params.beta_override >= 0.0 ? params.beta_override : reflection_coefficient(room);
  const double fs = room.sample_rate, c = room.speed_of_sound;
  const double d0 = distance(source, mic);
  const double tail_s = room.target_t60 * (params.decay_range_db / 60.0);
  const size_t len =
      static_cast<size_t>(std::ceil((d0 / c + tail_s) * fs)) + params.sinc_taps + 1;
  std::vector<double> h(len, 0.0);

  const bool direct_only = beta == 0.0 || params.max_order == 0;
  if (direct_only) {
    ism_detail::add_arrival(h, d0 / c * fs, 1.0 / (4.0 * std::numbers::pi * d0), params.sinc_taps);
    return h;
  }

  const double d_max = static_cast<double>(len) / fs * c;
  auto order_for = [&](double l) {
    return static_cast<long>(std::ceil((d_max + l) / (2.0 * l)));
  };
  long nx = order_for(room.lx), ny = order_for(room.ly), nz = order_for(room.lz);
  if (params.max_order > 0) {
    nx = std::min<long>(nx, params.max_order);
    ny = std::min<long>(ny, params.max_order);
    nz = std::min<long>(nz, params.max_order);
  }

  const size_t max_refl = 2 * static_cast<size_t>(nx + ny + nz) + 3;
  std::vector<double> beta_pow(max_refl + 1, 1.0);
  for (size_t i = 1; i <= max_refl; ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  for (long ix = -nx; ix <= nx; ++ix) {
    for (long q = 0; q <= 1; ++q) {
      const double px = (1 - 2 * q) * source.x + 2.0 * static_cast<double>(ix) * room.lx - mic.x;
      const size_t rx = static_cast<size_t>(std::labs(ix - q) + std::labs(ix));
      for (long iy = -ny; iy <= ny; ++iy) {
        for (long j = 0; j <= 1; ++j) {
          const double py = (1 - 2 * j) * source.y + 2.0 * static_cast<double>(iy) * room.ly - mic.y;
          const size_t ry = static_cast<size_t>(std::labs(iy - j) + std::labs(iy));
          const double pxy2 = px * px + py * py;
          if (pxy2 > d_max * d_max) continue;
          for (long iz = -nz; iz <= nz; ++iz) {
            for (long k = 0; k <= 1; ++k) {
              const double pz = (1 - 2 * k) * source.z + 2.0 * static_cast<double>(iz) * room.lz - mic.z;
              const double dist = std::sqrt(pxy2 + pz * pz);
              if (dist > d_max || dist < 1e-6) continue;
              const size_t refl = rx + ry + static_cast<size_t>(std::labs(iz - k) + std::labs(iz));
              const double amp = beta_pow[refl] / (4.0 * std::numbers::pi * dist);
              ism_detail::add_arrival(h, dist / c * fs, amp, params.sinc_taps);
            }
          }
        }
      }
    }
  }
  return h;
}

inline double direct_delay_samples(const RoomSpec& room, const Vec3& source, const Vec3& mic) {
  return distance(source, mic) / room.speed_of_sound * room.sample_rate;
}

inline double schroeder_t60(const std::vector<double>& h, double fs, double fit_lo_db, double fit_hi_db);

/// RIR factory with a calibrated reflection coefficient: closed-form
/// absorption (Sabine or Eyring) misses the measured Schroeder T60 of
/// image-source responses in disproportionate rooms by well over 20%, so
/// the coefficient is bisected until a reference response measures the
/// target within tolerance. Calibration runs once per (room, T60).
class RirSimulator {
 public:
  using Pair = std::pair<Vec3, Vec3>;

  explicit RirSimulator(RoomSpec room, IsmParams params = {}, std::vector<Pair> calibration_pairs = {})
      : room_(room), params_(params) {
    room_.check();
    if (room_.target_t60 == 0.0 || params_.max_order == 0 || params_.beta_override >= 0.0) {
      beta_ = params_.beta_override >= 0.0 ? params_.beta_override : 0.0;
      return;
    }
    if (calibration_pairs.empty()) {
      // generic interior trio spanning near, mid and far separations
      calibration_pairs = {
          {{0.31 * room_.lx, 0.36 * room_.ly, 0.52 * room_.lz}, {0.45 * room_.lx, 0.48 * room_.ly, 0.48 * room_.lz}},
          {{0.31 * room_.lx, 0.36 * room_.ly, 0.52 * room_.lz}, {0.72 * room_.lx, 0.68 * room_.ly, 0.48 * room_.lz}},
          {{0.22 * room_.lx, 0.18 * room_.ly, 0.45 * room_.lz}, {0.78 * room_.lx, 0.83 * room_.ly, 0.55 * room_.lz}},
      };
    }
    auto measure = [&](double beta) {
      IsmParams p = params_;
      p.beta_override = beta;
      double log_acc = 0.0;
      for (const auto& [src, mic] : calibration_pairs)
        log_acc += std::log(schroeder_t60(simulate_rir(room_, src, mic, p), room_.sample_rate, -5.0, -25.0));
      return std::exp(log_acc / static_cast<double>(calibration_pairs.size()));
    };
    double lo = 0.3 * reflection_coefficient(room_);
    double hi = 0.995;
    double beta = std::min(hi, reflection_coefficient(room_));
    for (int it = 0; it < 24; ++it) {
      const double rel = measure(beta) / room_.target_t60 - 1.0;
      if (std::abs(rel) < 0.02) break;
      (rel > 0.0 ? hi : lo) = beta;
      beta = 0.5 * (lo + hi);
    }
    beta_ = beta;
  }

  double beta() const { return beta_; }
  const RoomSpec& room() const { return room_; }
  const IsmParams& params() const { return params_; }

  std::vector<double> rir(const Vec3& source, const Vec3& mic) const {
    IsmParams p = params_;
    p.beta_override = beta_;
    return simulate_rir(room_, source, mic, p);
  }

 private:
  RoomSpec room_;
  IsmParams params_;
  double beta_ = 0.0;
};

/// Geometric TDoA in samples: positive when mic b is farther than mic a
/// (b's signal lags a's).
inline double geometric_tdoa_samples(const RoomSpec& room, const Vec3& source, const Vec3& mic_a,
                                     const Vec3& mic_b) {
  return (distance(source, mic_b) - distance(source, mic_a)) / room.speed_of_sound * room.sample_rate;
}

/// Renders Eq.-style microphone signals from precomputed RIRs: channel m is
/// (h_m * s) truncated to the source length, plus per-channel AWGN scaled
/// to the requested SNR exactly (the noise vector is RMS-normalized before
/// scaling, so the measured SNR equals the request).
inline Tensor<double> render_with_rirs(const Scene& scene, const std::vector<std::vector<double>>& rirs) {
  if (scene.signal.empty()) throw DataError("render_scene: empty source signal");
  double energy = 0.0;
  for (double v : scene.signal) energy += v * v;
  if (energy == 0.0) throw DataError("render_scene: silent source signal");
  if (rirs.size() != scene.array.mics.size()) throw ConfigError("render_scene: one RIR per microphone required");

  const size_t m = scene.array.mics.size();
  const size_t n = scene.signal.size();
  Tensor<double> x({m, n});
  for (size_t mi = 0; mi < m; ++mi) {
    auto y = fft_convolve(scene.signal, rirs[mi]);
    y.resize(n);

    if (std::isfinite(scene.snr_db)) {
      double p_sig = 0.0;
      for (double v : y) p_sig += v * v;
      p_sig /= static_cast<double>(n);
      const double p_noise = p_sig / std::pow(10.0, scene.snr_db / 10.0);
      Rng rng(derive_seed(scene.noise_seed, mi));
      std::vector<double> noise(n);
      double p_raw = 0.0;
      for (auto& v : noise) {
        v = rng.normal();
        p_raw += v * v;
      }
      p_raw /= static_cast<double>(n);
      const double scale = p_raw > 0.0 ? std::sqrt(p_noise / p_raw) : 0.0;
      for (size_t i = 0; i < n; ++i) y[i] += noise[i] * scale;
    }
    std::copy(y.begin(), y.end(), &x.data[mi * n]);
  }
  return x;
}

inline Tensor<double> render_scene(const Scene& scene, const IsmParams& params = {}) {
  scene.room.check();
  scene.array.check(scene.room);
  if (!scene.room.contains(scene.source)) throw ConfigError("render_scene: source outside the room");
  std::vector<std::vector<double>> rirs;
  rirs.reserve(scene.array.mics.size());
  for (const auto& mic : scene.array.mics) rirs.push_back(simulate_rir(scene.room, scene.source, mic, params));
  return render_with_rirs(scene, rirs);
}

/// Cuts a multichannel signal {M, L} into consecutive non-overlapping
/// {M, window} blocks; the trailing remainder is dropped.
inline std::vector<Tensor<double>> window_signal(const Tensor<double>& x, size_t window) {
  if (x.rank() != 2) throw ShapeError("window_signal: expects {channels, samples}");
  const size_t m = x.shape[0], len = x.shape[1];
  if (len < window) throw DataError("window_signal: signal shorter than one window");
  const size_t count = len / window;
  std::vector<Tensor<double>> out;
  out.reserve(count);
  for (size_t w = 0; w < count; ++w) {
    Tensor<double> win({m, window});
    for (size_t c = 0; c < m; ++c) std::copy_n(&x.data[c * len + w * window], window, &win.data[c * window]);
    out.push_back(std::move(win));
  }
  return out;
}

inline size_t window_samples(double window_ms, double fs) {
  return static_cast<size_t>(std::lround(window_ms / 1000.0 * fs));
}

/// Backward-integrated energy decay curve in dB, normalized to 0 at t=0.
inline std::vector<double> energy_decay_db(const std::vector<double>& h) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  if (acc == 0.0) throw DataError("energy_decay_db: silent impulse response");
  for (auto& v : edc) v = 10.0 * std::log10(std::max(v / acc, 1e-30));
  return edc;
}

/// T60 from the Schroeder curve: least-squares fit over the -5..-25 dB
/// stretch, extrapolated to 60 dB of decay.
inline double schroeder_t60(const std::vector<double>& h, double fs, double fit_lo_db = -5.0,
                            double fit_hi_db = -25.0) {
  const auto edc = energy_decay_db(h);
  size_t i1 = edc.size(), i2 = edc.size();
  for (size_t i = 0; i < edc.size(); ++i) {
    if (i1 == edc.size() && edc[i] <= fit_lo_db) i1 = i;
    if (edc[i] <= fit_hi_db) {
      i2 = i;
      break;
    }
  }
  if (i1 == edc.size()) throw DataError("schroeder_t60: decay never reaches the fit region");
  if (i2 == edc.size()) i2 = edc.size() - 1;
  if (i2 <= i1 + 1) throw DataError("schroeder_t60: decay region too short to fit");

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(i2 - i1 + 1);
  for (size_t i = i1; i <= i2; ++i) {
    const double xi = static_cast<double>(i);
    sx += xi;
    sy += edc[i];
    sxx += xi * xi;
    sxy += xi * edc[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);  // dB per sample
  if (slope >= 0.0) throw DataError("schroeder_t60: non-decaying energy curve");
  return -60.0 / slope / fs;
}

}  // namespace locrel
