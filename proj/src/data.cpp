#include "siamreid/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "siamreid/image_io.hpp"

namespace siamreid {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& items, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  if (items.size() > limit) out += ", ... (" + std::to_string(items.size()) + " total)";
  return out;
}

Tensor<float> load_resized(const fs::path& file, std::size_t height, std::size_t width) {
  Tensor<float> img = read_image(file);
  if (img.dim(1) == height && img.dim(2) == width) return img;
  return resize_bilinear(img, height, width);
}

// Bilinear sample of one H x W plane with coordinates clamped to the border.
float sample_clamped(const float* plane, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
  const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

template <class Map>
Tensor<float> remap(const Tensor<float>& image, Map&& source_of) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<float> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = image.data().data() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const auto [sy, sx] = source_of(static_cast<double>(y), static_cast<double>(x));
        out[(ch * h + y) * w + x] = sample_clamped(plane, h, w, sy, sx);
      }
  }
  return out;
}

// ---- synthetic pedestrians ------------------------------------------------

using Rgb = std::array<float, 3>;

struct Appearance {
  Rgb shirt, pants, skin, hair, accent, shoes;
  double body_width;  // fraction of image width
  double torso_top;   // fractions of the figure height
  double waist;
  double head_radius;
  int pattern;  // 0 plain, 1 stripes, 2 bag, 3 belt
  double stripe_period;
};

Rgb random_colour(Rng& rng) {
  return {static_cast<float>(rng.uniform(0.05, 0.95)), static_cast<float>(rng.uniform(0.05, 0.95)),
          static_cast<float>(rng.uniform(0.05, 0.95))};
}

Appearance random_appearance(Rng& rng) {
  static constexpr Rgb kSkins[] = {{0.95f, 0.80f, 0.68f}, {0.80f, 0.60f, 0.45f}, {0.55f, 0.38f, 0.26f},
                                   {0.36f, 0.24f, 0.16f}};
  Appearance a;
  a.shirt = random_colour(rng);
  a.pants = random_colour(rng);
  a.skin = kSkins[rng.below(4)];
  const float hair = static_cast<float>(rng.uniform(0.05, 0.6));
  a.hair = {hair, hair * 0.8f, hair * 0.6f};
  a.accent = random_colour(rng);
  const float shoe = static_cast<float>(rng.uniform(0.05, 0.4));
  a.shoes = {shoe, shoe, shoe};
  a.body_width = rng.uniform(0.34, 0.56);
  a.torso_top = rng.uniform(0.19, 0.24);
  a.waist = rng.uniform(0.50, 0.60);
  a.head_radius = rng.uniform(0.065, 0.09);
  a.pattern = static_cast<int>(rng.below(4));
  a.stripe_period = rng.uniform(14.0, 30.0);
  return a;
}

struct CameraModel {
  Rgb gain;
  float offset;
  Rgb background_tint;
  double scale;
  double drop;  // vertical offset of the figure, fraction of height
};

const CameraModel& camera_model(Camera c) {
  static const CameraModel a{{1.04f, 1.0f, 0.96f}, 0.02f, {0.06f, 0.04f, 0.0f}, 1.0, 0.0};
  static const CameraModel b{{0.96f, 1.0f, 1.04f}, -0.02f, {-0.04f, -0.02f, 0.03f}, 0.97, 0.02};
  return c == Camera::A ? a : b;
}

Tensor<float> render(const Appearance& a, Camera camera, Rng& rng, std::size_t height, std::size_t width) {
  const CameraModel& cam = camera_model(camera);
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const double scale = cam.scale * rng.uniform(0.98, 1.02);
  const double cx = w / 2.0 + rng.uniform(-2.0, 2.0);
  const double top = h * (0.04 + cam.drop) + rng.uniform(-2.0, 2.0);
  const double fig_h = h * 0.92 * scale;
  const double fig_w = w * scale;
  const float grey = static_cast<float>(rng.uniform(0.42, 0.58));
  const Rgb background = {grey + cam.background_tint[0] + static_cast<float>(rng.uniform(-0.02, 0.02)),
                          grey + cam.background_tint[1] + static_cast<float>(rng.uniform(-0.02, 0.02)),
                          grey + cam.background_tint[2] + static_cast<float>(rng.uniform(-0.02, 0.02))};
  const double brightness = rng.uniform(-0.03, 0.03);

  Tensor<float> img({3, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - cx) / fig_w;
      const double v = (static_cast<double>(y) + 0.5 - top) / fig_h;
      const double half = a.body_width / 2.0;
      Rgb c = background;
      for (int k = 0; k < 3; ++k) c[k] += 0.08f * static_cast<float>(y) / static_cast<float>(height);

      const double head_v = a.head_radius * 1.2;
      const double du = u / a.head_radius, dv = (v - head_v) / (a.head_radius * (fig_w / fig_h) * 1.0);
      if (du * du + dv * dv <= 1.0) {
        c = v < head_v - a.head_radius * 0.2 * (fig_w / fig_h) ? a.hair : a.skin;
      } else if (v >= a.torso_top && v < a.waist && std::abs(u) < half) {
        c = a.shirt;
        if (a.pattern == 1 && static_cast<int>(std::floor(v * fig_h / (a.stripe_period * 0.5))) % 2 == 1) c = a.accent;
        if (a.pattern == 3 && v > a.waist - 0.03) c = a.accent;
      } else if (v >= a.torso_top + 0.01 && v < a.waist + 0.06 && std::abs(u) >= half && std::abs(u) < half + 0.08) {
        c = {a.shirt[0] * 0.85f, a.shirt[1] * 0.85f, a.shirt[2] * 0.85f};
      } else if (v >= a.waist && v < 0.95 && std::abs(u) < half * 0.9 && std::abs(u) > 0.025) {
        c = a.pants;
      } else if (v >= 0.95 && v < 1.0 && std::abs(u) < half * 0.95 && std::abs(u) > 0.02) {
        c = a.shoes;
      }
      if (a.pattern == 2 && v >= 0.42 && v < 0.62 && u > half && u < half + 0.2) c = a.accent;

      for (int k = 0; k < 3; ++k) {
        const double val = c[k] * cam.gain[k] + cam.offset + brightness + 0.03 * rng.normal();
        img[(static_cast<std::size_t>(k) * height + y) * width + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

std::string IdentityDataset::report() const {
  std::size_t a = 0;
  for (const auto& r : records) a += r.camera == Camera::A;
  std::ostringstream out;
  out << identity_count() << " identities, " << records.size() << " images (" << a << " camera A / "
      << records.size() - a << " camera B), " << flagged.size() << " flagged with missing shots";
  return out.str();
}

std::vector<std::vector<std::size_t>> IdentityDataset::by_identity(std::optional<Camera> camera) const {
  std::vector<std::vector<std::size_t>> out(identity_count());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!camera || records[i].camera == *camera) out.at(static_cast<std::size_t>(records[i].identity)).push_back(i);
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ContractViolation("augment: flip probability must be in [0, 1]");
  if (!(zoom_min > 0.0 && zoom_max > 0.0 && zoom_min <= zoom_max)) {
    throw ContractViolation("augment: zoom range must satisfy 0 < min <= max");
  }
  if (!(shift >= 0.0 && shift <= 0.5)) throw ContractViolation("augment: shift fraction must be in [0, 0.5]");
}

std::size_t PairBatch::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), PairLabel::same));
}

std::optional<Cuhk01Name> parse_cuhk01_name(const std::string& filename) {
  static const std::regex pattern(R"(^(\d{4})(\d{3})\.(png|ppm|PNG|PPM)$)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern)) return std::nullopt;
  const int id = std::stoi(m[1]);
  const int shot = std::stoi(m[2]);
  if (shot < 1 || shot > 4) return std::nullopt;
  return Cuhk01Name{id, shot, shot <= 2 ? Camera::A : Camera::B};
}

IdentityDataset load_cuhk01(const fs::path& dir, std::size_t height, std::size_t width) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  std::vector<std::pair<std::string, Cuhk01Name>> files;
  std::vector<std::string> offenders;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.starts_with(".")) continue;
    if (auto parsed = parse_cuhk01_name(name)) {
      files.emplace_back(name, *parsed);
    } else {
      offenders.push_back(name);
    }
  }
  std::sort(offenders.begin(), offenders.end());
  if (!offenders.empty()) {
    throw DataError("unparseable CUHK01 file names (expected 4-digit identity + 3-digit shot 001-004): " +
                    join(offenders));
  }
  if (files.empty()) throw DataError("no images found in " + dir.string());
  std::sort(files.begin(), files.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  IdentityDataset ds;
  std::map<int, int> dense;
  std::map<int, int> shots;
  for (const auto& [name, parsed] : files) {
    auto [it, inserted] = dense.emplace(parsed.identity, static_cast<int>(dense.size()));
    if (inserted) {
      char label[8];
      std::snprintf(label, sizeof label, "%04d", parsed.identity);
      ds.identity_names.emplace_back(label);
    }
    ++shots[parsed.identity];
    ds.records.push_back({it->second, parsed.camera, load_resized(dir / name, height, width), name});
  }
  for (const auto& [id, n] : shots) {
    if (n != 4) ds.flagged.push_back(ds.identity_names[static_cast<std::size_t>(dense.at(id))]);
  }
  return ds;
}

IdentityDataset load_generic(const fs::path& dir, std::size_t height, std::size_t width) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  static const std::regex file_pattern(R"(^([AB])_(\d+)\.(png|ppm|PNG|PPM)$)");
  std::vector<std::string> ids;
  std::vector<std::string> offenders;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with(".")) continue;
    if (entry.is_directory()) {
      ids.push_back(name);
    } else if (name != "config.txt") {
      offenders.push_back(name);
    }
  }
  std::sort(ids.begin(), ids.end());
  IdentityDataset ds;
  for (const auto& id : ids) {
    std::vector<std::pair<std::string, Camera>> files;
    for (const auto& entry : fs::directory_iterator(dir / id)) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with(".")) continue;
      std::smatch m;
      if (!entry.is_regular_file() || !std::regex_match(name, m, file_pattern)) {
        offenders.push_back(id + "/" + name);
        continue;
      }
      files.emplace_back(name, m[1] == "A" ? Camera::A : Camera::B);
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int dense = static_cast<int>(ds.identity_names.size());
    ds.identity_names.push_back(id);
    bool has_a = false, has_b = false;
    for (const auto& [name, cam] : files) {
      (cam == Camera::A ? has_a : has_b) = true;
      ds.records.push_back({dense, cam, load_resized(dir / id / name, height, width), id + "/" + name});
    }
    if (!has_a || !has_b) ds.flagged.push_back(id);
  }
  std::sort(offenders.begin(), offenders.end());
  if (!offenders.empty()) {
    throw DataError("unexpected entries in generic dataset layout (<id>/<A|B>_<index>.png): " + join(offenders));
  }
  if (ds.records.empty()) throw DataError("no images found in " + dir.string());
  return ds;
}

void write_generic(const IdentityDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  std::map<std::pair<int, Camera>, int> counters;
  for (const auto& r : dataset.records) {
    const std::string& id = dataset.identity_names.at(static_cast<std::size_t>(r.identity));
    fs::create_directories(dir / id);
    const int index = counters[{r.identity, r.camera}]++;
    char name[32];
    std::snprintf(name, sizeof name, "%c_%03d.png", camera_letter(r.camera), index);
    write_png(dir / id / name, r.image);
  }
}

SyntheticReport pair_distance_report(const IdentityDataset& dataset) {
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  const auto& recs = dataset.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      const auto a = recs[i].image.data();
      const auto b = recs[j].image.data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - b[k];
        s += d * d;
      }
      if (recs[i].identity == recs[j].identity) {
        intra += std::sqrt(s);
        ++n_intra;
      } else {
        inter += std::sqrt(s);
        ++n_inter;
      }
    }
  }
  return {n_intra ? intra / static_cast<double>(n_intra) : 0.0, n_inter ? inter / static_cast<double>(n_inter) : 0.0};
}

IdentityDataset generate_synthetic(std::size_t n_ids, std::size_t per_camera, std::uint64_t seed,
                                   SyntheticReport* report, std::size_t height, std::size_t width) {
  if (n_ids < 2) throw ContractViolation("synthetic dataset needs at least 2 identities");
  if (per_camera < 1) throw ContractViolation("synthetic dataset needs at least 1 image per camera");
  Rng rng(seed);
  std::vector<Appearance> people;
  for (std::size_t i = 0; i < n_ids; ++i) people.push_back(random_appearance(rng));

  IdentityDataset ds;
  for (std::size_t i = 0; i < n_ids; ++i) {
    char label[32];
    std::snprintf(label, sizeof label, "%04zu", i + 1);
    ds.identity_names.emplace_back(label);
    for (Camera cam : {Camera::A, Camera::B}) {
      for (std::size_t k = 0; k < per_camera; ++k) {
        ds.records.push_back({static_cast<int>(i), cam, render(people[i], cam, rng, height, width),
                              std::string("synthetic/") + label + "/" + camera_letter(cam) + std::to_string(k)});
      }
    }
  }
  const SyntheticReport r = pair_distance_report(ds);
  if (!(r.mean_intra_distance < r.mean_inter_distance)) {
    throw std::logic_error("synthetic identities are not separable: mean intra distance " +
                           std::to_string(r.mean_intra_distance) + " >= inter distance " +
                           std::to_string(r.mean_inter_distance));
  }
  if (report) *report = r;
  return ds;
}

Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& config, Rng& rng) {
  config.validate();
  if (image.rank() != 3) throw ContractViolation("augment expects a C x H x W image, got " + shape_str(image.shape()));
  const bool flip = rng.uniform() < config.flip_prob;
  const double zoom = rng.uniform(config.zoom_min, config.zoom_max);
  const double shift = rng.uniform(-config.shift, config.shift) * static_cast<double>(image.dim(2));
  const double cy = static_cast<double>(image.dim(1)) / 2.0 - 0.5;
  const double cx = static_cast<double>(image.dim(2)) / 2.0 - 0.5;

  Tensor<float> out = image;
  if (flip) {
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = image[(ch * h + y) * w + (w - 1 - x)];
  }
  if (zoom != 1.0) {
    out = remap(out, [&](double y, double x) {
      return std::pair{(y - cy) / zoom + cy, (x - cx) / zoom + cx};
    });
  }
  if (shift != 0.0) {
    out = remap(out, [&](double y, double x) { return std::pair{y, x - shift}; });
  }
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ContractViolation("resize expects a C x H x W image, got " + shape_str(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  Tensor<float> out({c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = image.data().data() + ch * h * w;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        out[(ch * height + y) * width + x] = sample_clamped(plane, h, w, (static_cast<double>(y) + 0.5) * sy - 0.5,
                                                            (static_cast<double>(x) + 0.5) * sx - 0.5);
      }
  }
  return out;
}

Tensor<float> standardize(const Tensor<float>& image) {
  constexpr float kMean = 0.5f, kStd = 0.5f;
  Tensor<float> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - kMean) / kStd;
  return out;
}

Tensor<float> resize_normalize(const Tensor<float>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ContractViolation("resize_normalize expects a 3-channel C x H x W image, got " + shape_str(image.shape()));
  }
  return standardize(resize_bilinear(image, height, width));
}

std::size_t positive_count(std::size_t batch_size, double pos_ratio) {
  return static_cast<std::size_t>(std::llround(pos_ratio * static_cast<double>(batch_size)));
}

PairBatch sample_pair_batch(const IdentityDataset& dataset, std::size_t batch_size, double pos_ratio,
                            const AugmentConfig& augment_config, Rng& rng) {
  augment_config.validate();
  if (batch_size == 0) throw ContractViolation("batch size must be positive");
  if (!(pos_ratio >= 0.0 && pos_ratio <= 1.0)) throw ContractViolation("positive ratio must lie in [0, 1]");
  if (dataset.identity_count() < 2) throw SamplingError("pair sampling needs at least 2 identities");
  const std::size_t n_pos = positive_count(batch_size, pos_ratio);

  const auto cam_a = dataset.by_identity(Camera::A);
  const auto cam_b = dataset.by_identity(Camera::B);
  const auto all = dataset.by_identity();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < cam_a.size(); ++i) {
    if (!cam_a[i].empty() && !cam_b[i].empty()) eligible.push_back(i);
  }
  if (n_pos > 0 && eligible.empty()) throw SamplingError("no identity has images in both cameras; positives infeasible");
  std::vector<std::size_t> populated;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!all[i].empty()) populated.push_back(i);
  }
  if (n_pos < batch_size && populated.size() < 2) throw SamplingError("negatives need two identities with images");

  PairBatch batch;
  std::vector<Tensor<float>> left, right;
  left.reserve(batch_size);
  right.reserve(batch_size);
  auto pick = [&](const std::vector<std::size_t>& v) { return v[rng.below(v.size())]; };
  auto emit = [&](std::size_t r1, std::size_t r2, PairLabel label) {
    left.push_back(standardize(augment(dataset.records[r1].image, augment_config, rng)));
    right.push_back(standardize(augment(dataset.records[r2].image, augment_config, rng)));
    batch.labels.push_back(label);
    batch.records.emplace_back(r1, r2);
  };
  for (std::size_t k = 0; k < n_pos; ++k) {
    const std::size_t id = pick(eligible);
    const std::size_t ra = pick(cam_a[id]);
    const std::size_t rb = pick(cam_b[id]);
    emit(ra, rb, PairLabel::same);
  }
  for (std::size_t k = n_pos; k < batch_size; ++k) {
    const std::size_t i1 = rng.below(populated.size());
    std::size_t i2 = rng.below(populated.size() - 1);
    if (i2 >= i1) ++i2;
    emit(pick(all[populated[i1]]), pick(all[populated[i2]]), PairLabel::different);
  }
  batch.images1 = stack<float>(left);
  batch.images2 = stack<float>(right);
  return batch;
}

IdentityDataset subset_identities(const IdentityDataset& dataset, const std::vector<int>& identities) {
  IdentityDataset out;
  out.split = dataset.split;
  std::map<int, int> dense;
  for (int id : identities) {
    if (id < 0 || static_cast<std::size_t>(id) >= dataset.identity_count()) {
      throw ContractViolation("identity index " + std::to_string(id) + " out of range");
    }
    dense.emplace(id, static_cast<int>(out.identity_names.size()));
    out.identity_names.push_back(dataset.identity_names[static_cast<std::size_t>(id)]);
  }
  for (const auto& r : dataset.records) {
    if (auto it = dense.find(r.identity); it != dense.end()) {
      ImageRecord copy = r;
      copy.identity = it->second;
      out.records.push_back(std::move(copy));
    }
  }
  const std::set<std::string> kept(out.identity_names.begin(), out.identity_names.end());
  for (const auto& f : dataset.flagged) {
    if (kept.contains(f)) out.flagged.push_back(f);
  }
  return out;
}

std::pair<IdentityDataset, IdentityDataset> split_protocol(const IdentityDataset& dataset, std::size_t n_test_ids,
                                                           std::uint64_t seed) {
  const std::size_t n = dataset.identity_count();
  if (n_test_ids >= n) {
    throw ContractViolation("cannot hold out " + std::to_string(n_test_ids) + " test identities from " +
                            std::to_string(n));
  }
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(ids.begin(), ids.end());
  std::vector<int> test(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test_ids));
  std::vector<int> train(ids.begin() + static_cast<std::ptrdiff_t>(n_test_ids), ids.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  auto train_ds = subset_identities(dataset, train);
  auto test_ds = subset_identities(dataset, test);
  train_ds.split = "train";
  test_ds.split = "test";
  return {std::move(train_ds), std::move(test_ds)};
}

std::vector<std::pair<std::size_t, std::size_t>> positive_pairs(const IdentityDataset& dataset) {
  const auto cam_a = dataset.by_identity(Camera::A);
  const auto cam_b = dataset.by_identity(Camera::B);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < cam_a.size(); ++i)
    for (std::size_t a : cam_a[i])
      for (std::size_t b : cam_b[i]) out.emplace_back(a, b);
  return out;
}

std::size_t count_negative_pairs(const IdentityDataset& dataset) {
  auto choose2 = [](std::size_t k) { return k * (k - (k > 0 ? 1 : 0)) / 2; };
  std::size_t total = choose2(dataset.records.size());
  for (const auto& recs : dataset.by_identity()) total -= choose2(recs.size());
  return total;
}

}  // namespace siamreid
