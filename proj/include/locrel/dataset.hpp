#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "locrel/errors.hpp"
#include "locrel/room.hpp"
#include "locrel/train.hpp"
#include "locrel/wav.hpp"

namespace locrel {

// --- source grids --------------------------------------------------------

struct GridConfig {
  // x-y region holding train/val sources, external to the array line
  double x0 = 0.825, y0 = 4.5, width = 1.75, height = 2.0;
  size_t nx = 0, ny = 0;    // explicit grid, or:
  size_t target_count = 0;  // smallest aspect-matched grid >= count, trimmed to exactly count
  double z_min = 1.0, z_max = 1.5;
  // test sources: separate grid centered in the source region
  double test_width = 0.5, test_height = 0.5;
  size_t test_nx = 4, test_ny = 4;
  uint64_t seed = 0;
};

struct SourceGrid {
  std::vector<Vec3> pool;  // train + validation candidates
  std::vector<Vec3> test;
};

inline void to_json(nlohmann::json& j, const GridConfig& g) {
  j = {{"x0", g.x0},         {"y0", g.y0},
       {"width", g.width},   {"height", g.height},
       {"nx", g.nx},         {"ny", g.ny},
       {"target_count", g.target_count},
       {"z_min", g.z_min},   {"z_max", g.z_max},
       {"test_width", g.test_width}, {"test_height", g.test_height},
       {"test_nx", g.test_nx}, {"test_ny", g.test_ny},
       {"seed", g.seed}};
}

inline void from_json(const nlohmann::json& j, GridConfig& g) {
  g.x0 = j.value("x0", g.x0);
  g.y0 = j.value("y0", g.y0);
  g.width = j.value("width", g.width);
  g.height = j.value("height", g.height);
  g.nx = j.value("nx", g.nx);
  g.ny = j.value("ny", g.ny);
  g.target_count = j.value("target_count", g.target_count);
  g.z_min = j.value("z_min", g.z_min);
  g.z_max = j.value("z_max", g.z_max);
  g.test_width = j.value("test_width", g.test_width);
  g.test_height = j.value("test_height", g.test_height);
  g.test_nx = j.value("test_nx", g.test_nx);
  g.test_ny = j.value("test_ny", g.test_ny);
  g.seed = j.value("seed", g.seed);
}

/// Deterministic source layout: an nx-by-ny grid over the region with
/// per-point z drawn uniformly from [z_min, z_max], plus a separate test
/// grid centered in the region. With target_count set, the smallest
/// aspect-matched grid covering it is built and trimmed to the exact count.
inline SourceGrid generate_grid(const GridConfig& cfg, const RoomSpec& room, const ArrayGeometry& array) {
  GridConfig g = cfg;
  if (g.target_count > 0) {
    const double aspect = g.width / g.height;
    g.nx = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(g.target_count) * aspect)));
    g.nx = std::max<size_t>(1, g.nx);
    g.ny = (g.target_count + g.nx - 1) / g.nx;
  }
  if (g.nx == 0 || g.ny == 0) throw ConfigError("grid: spacing/config produces zero sources");
  if (g.x0 <= 0 || g.y0 <= 0 || g.x0 + g.width >= room.lx || g.y0 + g.height >= room.ly)
    throw ConfigError("grid: source region does not fit inside the room");

  auto z_of = [&](uint64_t stream) {
    Rng r(derive_seed(g.seed, stream));
    return g.z_min + (g.z_max - g.z_min) * r.uniform();
  };
  auto check_point = [&](const Vec3& p) {
    if (!room.contains(p)) throw ConfigError("grid: source outside the room");
    for (const auto& m : array.mics)
      if (distance(p, m) < 0.05) throw ConfigError("grid: source on the array line");
  };

  SourceGrid out;
  const double dx = g.nx > 1 ? g.width / static_cast<double>(g.nx - 1) : 0.0;
  const double dy = g.ny > 1 ? g.height / static_cast<double>(g.ny - 1) : 0.0;
  for (size_t iy = 0; iy < g.ny && (g.target_count == 0 || out.pool.size() < g.target_count); ++iy) {
    for (size_t ix = 0; ix < g.nx && (g.target_count == 0 || out.pool.size() < g.target_count); ++ix) {
      Vec3 p{g.x0 + dx * static_cast<double>(ix), g.y0 + dy * static_cast<double>(iy), 0.0};
      p.z = z_of(out.pool.size());
      check_point(p);
      out.pool.push_back(p);
    }
  }

  const double tx0 = g.x0 + (g.width - g.test_width) / 2.0;
  const double ty0 = g.y0 + (g.height - g.test_height) / 2.0;
  const double tdx = g.test_nx > 1 ? g.test_width / static_cast<double>(g.test_nx - 1) : 0.0;
  const double tdy = g.test_ny > 1 ? g.test_height / static_cast<double>(g.test_ny - 1) : 0.0;
  for (size_t iy = 0; iy < g.test_ny; ++iy) {
    for (size_t ix = 0; ix < g.test_nx; ++ix) {
      Vec3 p{tx0 + tdx * static_cast<double>(ix), ty0 + tdy * static_cast<double>(iy), 0.0};
      p.z = z_of(1000000 + out.test.size());
      check_point(p);
      out.test.push_back(p);
    }
  }
  return out;
}

// --- speech ingestion and the synthetic surrogate -------------------------

struct Recording {
  std::string name;
  std::vector<double> samples;  // mono at the pipeline rate
};

/// Loads every .wav under the directory (sorted by name), downmixes to
/// mono, resamples to target_fs and rejects silent files.
inline std::vector<Recording> ingest_speech(const std::string& dir, double target_fs = 16000.0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("ingest: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("ingest: no wav files in " + dir);

  std::vector<Recording> out;
  for (const auto& f : files) {
    WavData w = read_wav(f);
    auto s = resample(w.samples, w.sample_rate, target_fs);
    double energy = 0.0;
    for (double v : s) energy += v * v;
    if (energy == 0.0) throw DataError("ingest: silent recording rejected: " + f);
    out.push_back({fs::path(f).filename().string(), std::move(s)});
  }
  return out;
}

/// Speech-shaped surrogate: band-limited noise bursts separated by silent
/// pauses. Pauses take at least a third of each burst/pause cycle, so
/// roughly a third of the recording is low-energy by construction, and no
/// pause exceeds ~130 ms, so every 320 ms window overlaps a burst.
inline std::vector<double> surrogate_recording(uint64_t seed, double duration_s, double fs = 16000.0) {
  const size_t n = static_cast<size_t>(std::lround(duration_s * fs));
  Rng rng(derive_seed(seed, 0x73757272ull));

  // band-limit first, gate afterwards so pauses stay exactly zero
  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  const size_t taps = 101;
  std::vector<double> bp(taps);
  const double f_lo = 200.0 / fs, f_hi = 3400.0 / fs;
  for (size_t i = 0; i < taps; ++i) {
    const double u = static_cast<double>(i) - static_cast<double>(taps - 1) / 2.0;
    auto lp = [&](double fc) {
      return u == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * u) / (std::numbers::pi * u);
    };
    const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / (taps - 1)));
    bp[i] = (lp(f_hi) - lp(f_lo)) * w;
  }
  auto filtered = fft_convolve(noise, bp);
  // compensate the filter group delay so bursts align with the envelope
  const size_t delay = (taps - 1) / 2;
  std::vector<double> band(n);
  for (size_t i = 0; i < n; ++i) band[i] = filtered[i + delay];

  std::vector<double> env(n, 0.0);
  const size_t ramp = static_cast<size_t>(0.015 * fs);
  size_t t = static_cast<size_t>(rng.uniform(0.04, 0.09) * fs);
  while (t < n) {
    const size_t burst = static_cast<size_t>(rng.uniform(0.15, 0.23) * fs);
    const size_t pause = static_cast<size_t>(static_cast<double>(burst) * 0.5 * rng.uniform(0.95, 1.15));
    const double amp = rng.uniform(0.6, 1.0);
    for (size_t i = 0; i < burst && t + i < n; ++i) {
      double e = amp;
      if (i < ramp) e *= 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / ramp));
      const size_t left = burst - i;
      if (left < ramp) e *= 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(left) / ramp));
      env[t + i] = e;
    }
    t += burst + pause;
  }

  std::vector<double> out(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    out[i] = band[i] * env[i];
    peak = std::max(peak, std::abs(out[i]));
  }
  if (peak > 0.0)
    for (auto& v : out) v *= 0.5 / peak;
  return out;
}

// --- dataset assembly -----------------------------------------------------

struct Condition {
  double snr_db = 25.0;
  double t60 = 0.15;
};

inline void to_json(nlohmann::json& j, const Condition& c) { j = {{"snr_db", c.snr_db}, {"t60", c.t60}}; }
inline void from_json(const nlohmann::json& j, Condition& c) {
  c.snr_db = j.value("snr_db", c.snr_db);
  c.t60 = j.value("t60", c.t60);
}

struct DatasetConfig {
  RoomSpec room;  // target_t60 taken from each condition
  ArrayGeometry array = ArrayGeometry::default_ula16();
  GridConfig grid;
  std::vector<Condition> conditions = {{25.0, 0.15}};
  size_t n_train = 100, n_val = 25;
  double window_ms = 320.0;
  double surrogate_duration_s = 1.0;
  std::string corpus_dir;  // empty: synthetic surrogate speech
  uint64_t seed = 0;
  IsmParams ism;
  std::string cache_dir;  // optional on-disk RIR cache
};

struct SourceEntry {
  uint32_t id;
  Vec3 pos;
  uint8_t split;  // 0 train, 1 val, 2 test
  uint64_t surrogate_seed = 0;
  std::string recording_file;  // corpus mode
  uint32_t n_windows = 0;
};

struct DatasetManifest {
  uint32_t schema_version = 1;
  DatasetConfig config;
  size_t window = 5120;
  std::vector<SourceEntry> sources;
  std::vector<std::string> store_files;  // one per condition
};

constexpr const char* kStoreMagic = "LRXSTOR1";

struct StoreHeader {
  uint32_t n_examples = 0;
  uint32_t channels = 0;
  uint32_t window = 0;
  uint32_t condition_index = 0;
  double snr_db = 0.0;
  double t60 = 0.0;
};

struct StoredExample {
  uint32_t source_id = 0;
  uint32_t window_idx = 0;
  uint8_t split = 0;
  std::array<float, 3> target{};
  Tensor<float> input;  // {channels, window}
};

namespace store_detail {

inline void wr_u32(std::FILE* f, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  std::fwrite(b, 1, 4, f);
}
inline void wr_f32(std::FILE* f, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  wr_u32(f, bits);
}
inline void wr_f64(std::FILE* f, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(bits >> (8 * i));
  std::fwrite(b, 1, 8, f);
}

struct Reader {
  std::vector<uint8_t> buf;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > buf.size()) throw DataError("example store: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
};

}  // namespace store_detail

/// One example store per condition: header, packed float32 examples
/// (channel-major input of shape {M, window}), FNV-1a trailer.
inline void write_store(const std::string& path, const StoreHeader& h, const std::vector<StoredExample>& examples) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("example store: cannot open " + path + " for writing");
  using namespace store_detail;
  std::fwrite(kStoreMagic, 1, 8, f);
  wr_u32(f, 1);
  wr_u32(f, h.n_examples);
  wr_u32(f, h.channels);
  wr_u32(f, h.window);
  wr_u32(f, h.condition_index);
  wr_f64(f, h.snr_db);
  wr_f64(f, h.t60);
  for (const auto& ex : examples) {
    wr_u32(f, ex.source_id);
    wr_u32(f, ex.window_idx);
    std::fputc(ex.split, f);
    for (float t : ex.target) wr_f32(f, t);
    for (float v : ex.input.data) wr_f32(f, v);
  }
  std::fclose(f);

  // append checksum over everything written so far
  std::ifstream in(path, std::ios::binary);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const uint64_t sum = fnv1a(bytes.data(), bytes.size());
  f = std::fopen(path.c_str(), "ab");
  if (!f) throw DataError("example store: cannot reopen " + path);
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(sum >> (8 * i));
  std::fwrite(b, 1, 8, f);
  std::fclose(f);
}

inline std::pair<StoreHeader, std::vector<StoredExample>> read_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("example store: cannot open " + path);
  store_detail::Reader r;
  r.buf.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (r.buf.size() < 8 + 4) throw DataError("example store: truncated file");
  const uint64_t expect = fnv1a(r.buf.data(), r.buf.size() - 8);
  store_detail::Reader tail{r.buf, r.buf.size() - 8};
  if (tail.u64() != expect) throw DataError("example store: checksum mismatch in " + path);

  char magic[9] = {};
  r.need(8);
  std::memcpy(magic, r.buf.data(), 8);
  r.pos = 8;
  if (std::string(magic) != kStoreMagic) throw DataError("example store: bad magic in " + path);
  if (r.u32() != 1) throw DataError("example store: unsupported version in " + path);
  StoreHeader h;
  h.n_examples = r.u32();
  h.channels = r.u32();
  h.window = r.u32();
  h.condition_index = r.u32();
  h.snr_db = r.f64();
  h.t60 = r.f64();

  std::vector<StoredExample> out;
  out.reserve(h.n_examples);
  for (uint32_t i = 0; i < h.n_examples; ++i) {
    StoredExample ex;
    ex.source_id = r.u32();
    ex.window_idx = r.u32();
    ex.split = r.u8();
    for (auto& t : ex.target) t = r.f32();
    ex.input = Tensor<float>({h.channels, h.window});
    for (auto& v : ex.input.data) v = r.f32();
    out.push_back(std::move(ex));
  }
  return {h, std::move(out)};
}

inline std::vector<Example<float>> examples_for_split(const std::vector<StoredExample>& all, uint8_t split) {
  std::vector<Example<float>> out;
  for (const auto& ex : all) {
    if (ex.split != split) continue;
    Tensor<float> target({3}, {ex.target[0], ex.target[1], ex.target[2]});
    out.push_back({ex.input, std::move(target)});
  }
  return out;
}

// --- manifest (de)serialization -------------------------------------------

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  nlohmann::json mics = nlohmann::json::array();
  for (const auto& m : c.array.mics) mics.push_back({m.x, m.y, m.z});
  j = {{"room", {{"lx", c.room.lx}, {"ly", c.room.ly}, {"lz", c.room.lz},
                 {"speed_of_sound", c.room.speed_of_sound}, {"sample_rate", c.room.sample_rate}}},
       {"mics", mics},
       {"grid", c.grid},
       {"conditions", c.conditions},
       {"n_train", c.n_train},
       {"n_val", c.n_val},
       {"window_ms", c.window_ms},
       {"surrogate_duration_s", c.surrogate_duration_s},
       {"corpus_dir", c.corpus_dir},
       {"seed", c.seed},
       {"ism", {{"sinc_taps", c.ism.sinc_taps}, {"decay_range_db", c.ism.decay_range_db},
                {"max_order", c.ism.max_order}}},
       {"cache_dir", c.cache_dir}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  if (j.contains("room")) {
    const auto& r = j["room"];
    c.room.lx = r.value("lx", c.room.lx);
    c.room.ly = r.value("ly", c.room.ly);
    c.room.lz = r.value("lz", c.room.lz);
    c.room.speed_of_sound = r.value("speed_of_sound", c.room.speed_of_sound);
    c.room.sample_rate = r.value("sample_rate", c.room.sample_rate);
  }
  if (j.contains("mics")) {
    c.array.mics.clear();
    for (const auto& m : j["mics"]) c.array.mics.push_back({m[0], m[1], m[2]});
  }
  if (j.contains("grid")) c.grid = j["grid"].get<GridConfig>();
  if (j.contains("conditions")) c.conditions = j["conditions"].get<std::vector<Condition>>();
  c.n_train = j.value("n_train", c.n_train);
  c.n_val = j.value("n_val", c.n_val);
  c.window_ms = j.value("window_ms", c.window_ms);
  c.surrogate_duration_s = j.value("surrogate_duration_s", c.surrogate_duration_s);
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ism")) {
    const auto& p = j["ism"];
    c.ism.sinc_taps = p.value("sinc_taps", c.ism.sinc_taps);
    c.ism.decay_range_db = p.value("decay_range_db", c.ism.decay_range_db);
    c.ism.max_order = p.value("max_order", c.ism.max_order);
  }
  c.cache_dir = j.value("cache_dir", c.cache_dir);
}

inline void to_json(nlohmann::json& j, const SourceEntry& s) {
  j = {{"id", s.id},
       {"pos", {s.pos.x, s.pos.y, s.pos.z}},
       {"split", s.split},
       {"surrogate_seed", s.surrogate_seed},
       {"recording_file", s.recording_file},
       {"n_windows", s.n_windows}};
}

inline void from_json(const nlohmann::json& j, SourceEntry& s) {
  s.id = j.at("id");
  s.pos = {j.at("pos")[0], j.at("pos")[1], j.at("pos")[2]};
  s.split = j.at("split");
  s.surrogate_seed = j.value("surrogate_seed", 0ull);
  s.recording_file = j.value("recording_file", "");
  s.n_windows = j.value("n_windows", 0u);
}

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = {{"schema_version", m.schema_version},
       {"config", m.config},
       {"window", m.window},
       {"sources", m.sources},
       {"store_files", m.store_files}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.schema_version = j.at("schema_version");
  if (m.schema_version != 1) throw DataError("manifest: unsupported schema version");
  m.config = j.at("config").get<DatasetConfig>();
  m.window = j.at("window");
  m.sources = j.at("sources").get<std::vector<SourceEntry>>();
  m.store_files = j.at("store_files").get<std::vector<std::string>>();
}

// --- build ----------------------------------------------------------------

namespace build_detail {

inline uint64_t rir_cache_key(const RoomSpec& room, double beta, const IsmParams& p, const Vec3& src,
                              const Vec3& mic) {
  double vals[] = {room.lx, room.ly, room.lz, room.speed_of_sound, room.sample_rate, beta,
                   static_cast<double>(p.sinc_taps), p.decay_range_db, static_cast<double>(p.max_order),
                   src.x, src.y, src.z, mic.x, mic.y, mic.z};
  return fnv1a(vals, sizeof vals);
}

inline std::vector<double> cached_rir(const RirSimulator& sim, const Vec3& src, const Vec3& mic,
                                      const std::string& cache_dir) {
  if (cache_dir.empty()) return sim.rir(src, mic);
  namespace fs = std::filesystem;
  fs::create_directories(cache_dir);
  char name[32];
  std::snprintf(name, sizeof name, "rir_%016llx.bin",
                static_cast<unsigned long long>(rir_cache_key(sim.room(), sim.beta(), sim.params(), src, mic)));
  const fs::path path = fs::path(cache_dir) / name;
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    store_detail::Reader r;
    r.buf.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (r.buf.size() >= 12 && fnv1a(r.buf.data(), r.buf.size() - 8) ==
                                  store_detail::Reader{r.buf, r.buf.size() - 8}.u64()) {
      const uint32_t len = r.u32();
      std::vector<double> h(len);
      for (auto& v : h) v = r.f64();
      return h;
    }
    // corrupt cache entry: fall through and regenerate
  }
  auto h = sim.rir(src, mic);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f) {
    store_detail::wr_u32(f, static_cast<uint32_t>(h.size()));
    for (double v : h) store_detail::wr_f64(f, v);
    std::fclose(f);
    std::ifstream in(path, std::ios::binary);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const uint64_t sum = fnv1a(bytes.data(), bytes.size());
    f = std::fopen(path.c_str(), "ab");
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(sum >> (8 * i));
    std::fwrite(b, 1, 8, f);
    std::fclose(f);
  }
  return h;
}

}  // namespace build_detail

/// Renders every (source, condition) scene, windows the microphone signals
/// and writes one example store per condition plus a JSON manifest. Fully
/// deterministic in config.seed; rebuilding from the manifest reproduces
/// the stores byte for byte.
inline DatasetManifest build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.conditions.empty()) throw ConfigError("dataset: no conditions");
  fs::create_directories(out_dir);

  RoomSpec room = cfg.room;
  room.target_t60 = 0.0;
  room.check();
  cfg.array.check(room);
  const auto grid = generate_grid(cfg.grid, room, cfg.array);
  if (grid.pool.size() < cfg.n_train + cfg.n_val)
    throw ConfigError("dataset: pool smaller than train+val split (" + std::to_string(grid.pool.size()) + " < " +
                      std::to_string(cfg.n_train + cfg.n_val) + ")");

  const size_t window = window_samples(cfg.window_ms, room.sample_rate);

  // seeded permutation assigns splits (and corpus recordings) to sources
  Rng split_rng(derive_seed(cfg.seed, 0x73706c69ull));
  std::vector<size_t> order(grid.pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);

  std::vector<Recording> corpus;
  if (!cfg.corpus_dir.empty()) {
    corpus = ingest_speech(cfg.corpus_dir, room.sample_rate);
    if (corpus.size() < grid.pool.size() + grid.test.size())
      throw DataError("dataset: not enough recordings for one-per-source assignment");
  }
  Rng rec_rng(derive_seed(cfg.seed, 0x7265636full));
  std::vector<size_t> rec_order(corpus.size());
  for (size_t i = 0; i < rec_order.size(); ++i) rec_order[i] = i;
  rec_rng.shuffle(rec_order);

  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.window = window;

  std::vector<std::vector<double>> signals;  // per source id
  uint32_t next_id = 0;
  auto add_source = [&](const Vec3& pos, uint8_t split) {
    SourceEntry e;
    e.id = next_id++;
    e.pos = pos;
    e.split = split;
    if (corpus.empty()) {
      e.surrogate_seed = derive_seed(cfg.seed, 0x736f757200ull + e.id);
      signals.push_back(surrogate_recording(e.surrogate_seed, cfg.surrogate_duration_s, room.sample_rate));
    } else {
      const auto& rec = corpus[rec_order[e.id]];
      e.recording_file = rec.name;
      signals.push_back(rec.samples);
    }
    if (signals.back().size() < window)
      throw DataError("dataset: recording shorter than one window for source " + std::to_string(e.id));
    e.n_windows = static_cast<uint32_t>(signals.back().size() / window);
    manifest.sources.push_back(e);
  };
  for (size_t i = 0; i < cfg.n_train; ++i) add_source(grid.pool[order[i]], 0);
  for (size_t i = 0; i < cfg.n_val; ++i) add_source(grid.pool[order[cfg.n_train + i]], 1);
  for (const auto& p : grid.test) add_source(p, 2);

  // calibration pairs representative of the source-region/array population
  std::vector<RirSimulator::Pair> calib = {
      {{cfg.grid.x0 + 0.5 * cfg.grid.width, cfg.grid.y0 + 0.5 * cfg.grid.height, 1.25},
       cfg.array.mics[cfg.array.mics.size() / 2]},
      {{cfg.grid.x0 + 0.1 * cfg.grid.width, cfg.grid.y0 + 0.05 * cfg.grid.height, 1.1},
       cfg.array.mics.back()},
      {{cfg.grid.x0 + 0.9 * cfg.grid.width, cfg.grid.y0 + 0.95 * cfg.grid.height, 1.4},
       cfg.array.mics.front()},
  };

  for (size_t ci = 0; ci < cfg.conditions.size(); ++ci) {
    const auto& cond = cfg.conditions[ci];
    RoomSpec cond_room = cfg.room;
    cond_room.target_t60 = cond.t60;
    RirSimulator sim(cond_room, cfg.ism, calib);

    StoreHeader h;
    h.channels = static_cast<uint32_t>(cfg.array.mics.size());
    h.window = static_cast<uint32_t>(window);
    h.condition_index = static_cast<uint32_t>(ci);
    h.snr_db = cond.snr_db;
    h.t60 = cond.t60;

    std::vector<StoredExample> examples;
    for (const auto& src : manifest.sources) {
      Scene scene;
      scene.room = cond_room;
      scene.array = cfg.array;
      scene.source = src.pos;
      scene.signal = signals[src.id];
      scene.snr_db = cond.snr_db;
      scene.noise_seed = derive_seed(cfg.seed, 0x6e6f697aull + src.id * 1009 + ci);

      std::vector<std::vector<double>> rirs;
      rirs.reserve(cfg.array.mics.size());
      for (const auto& mic : cfg.array.mics)
        rirs.push_back(build_detail::cached_rir(sim, src.pos, mic, cfg.cache_dir));
      const auto x = render_with_rirs(scene, rirs);
      auto windows = window_signal(x, window);
      for (size_t wi = 0; wi < windows.size(); ++wi) {
        StoredExample ex;
        ex.source_id = src.id;
        ex.window_idx = static_cast<uint32_t>(wi);
        ex.split = src.split;
        ex.target = {static_cast<float>(src.pos.x), static_cast<float>(src.pos.y), static_cast<float>(src.pos.z)};
        ex.input = windows[wi].cast<float>();
        examples.push_back(std::move(ex));
      }
    }
    h.n_examples = static_cast<uint32_t>(examples.size());
    char fname[40];
    std::snprintf(fname, sizeof fname, "examples_cond%zu.bin", ci);
    write_store((fs::path(out_dir) / fname).string(), h, examples);
    manifest.store_files.push_back(fname);
  }

  // atomic manifest write
  const nlohmann::json j = manifest;
  const fs::path mpath = fs::path(out_dir) / "manifest.json";
  const fs::path tmp = mpath.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, mpath);
  return manifest;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j.get<DatasetManifest>();
}

}  // namespace locrel
