#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dmn/random.hpp"

namespace dmn {

// ---------- PPM/PGM ----------

inline void write_ppm(const std::string& path, const std::vector<uint8_t>& rgb, int h, int w) {
  check((long)rgb.size() == 3L * h * w, "write_ppm: buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image for writing: " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  // interleave channel-planar to pixel order
  for (long p = 0; p < (long)h * w; ++p) {
    uint8_t px[3] = {rgb[p], rgb[(long)h * w + p], rgb[2L * h * w + p]};
    f.write(reinterpret_cast<char*>(px), 3);
  }
  if (!f) throw IoError("failed writing image: " + path);
}

inline void write_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w) {
  check((long)gray.size() == (long)h * w, "write_pgm: buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()), (long)gray.size());
  if (!f) throw IoError("failed writing image: " + path);
}

namespace detail {

inline int read_pnm_token(std::istream& f, const std::string& path) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = f.peek();
    if (c == '#') {
      std::string line;
      std::getline(f, line);
    } else if (std::isspace(c)) {
      f.get();
    } else {
      break;
    }
  }
  int v;
  if (!(f >> v)) throw IoError("malformed PNM header in " + path);
  return v;
}

}  // namespace detail

// Returns channel-planar RGB and sets (h, w).
inline std::vector<uint8_t> read_ppm(const std::string& path, int& h, int& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw IoError("expected P6 PPM in " + path + ", got '" + magic + "'");
  w = detail::read_pnm_token(f, path);
  h = detail::read_pnm_token(f, path);
  int maxval = detail::read_pnm_token(f, path);
  if (maxval != 255) throw IoError("unsupported PPM maxval in " + path);
  f.get();  // single whitespace after header
  std::vector<uint8_t> inter(3L * h * w);
  f.read(reinterpret_cast<char*>(inter.data()), (long)inter.size());
  if (!f) throw IoError("truncated image file: " + path);
  std::vector<uint8_t> rgb(3L * h * w);
  for (long p = 0; p < (long)h * w; ++p)
    for (int c = 0; c < 3; ++c) rgb[(long)c * h * w + p] = inter[3 * p + c];
  return rgb;
}

inline std::vector<uint8_t> read_pgm(const std::string& path, int& h, int& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw IoError("expected P5 PGM in " + path + ", got '" + magic + "'");
  w = detail::read_pnm_token(f, path);
  h = detail::read_pnm_token(f, path);
  int maxval = detail::read_pnm_token(f, path);
  if (maxval != 255) throw IoError("unsupported PGM maxval in " + path);
  f.get();
  std::vector<uint8_t> gray((long)h * w);
  f.read(reinterpret_cast<char*>(gray.data()), (long)gray.size());
  if (!f) throw IoError("truncated image file: " + path);
  return gray;
}

// ---------- scene model ----------

enum class ShapeKind { circle, square, triangle };
inline const std::array<std::string, 3> kShapeNames = {"circle", "square", "triangle"};
inline const std::array<std::string, 4> kColorNames = {"red", "green", "blue", "yellow"};
inline const std::array<std::array<Scalar, 3>, 4> kColorRgb = {
    {{0.9, 0.15, 0.15}, {0.15, 0.8, 0.2}, {0.2, 0.3, 0.9}, {0.9, 0.85, 0.15}}};

struct SceneObject {
  ShapeKind shape;
  int color;  // index into kColorNames
  Scalar cx, cy, size;
};

struct SceneSpec {
  int h = 32, w = 32;
  int min_objects = 2, max_objects = 4;
  Scalar min_size = 3.5, max_size = 6.0;
  Scalar min_separation = 2.0;
  int max_retries = 200;
};

inline bool object_contains(const SceneObject& o, Scalar px, Scalar py) {
  Scalar dx = px - o.cx, dy = py - o.cy;
  switch (o.shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= o.size * o.size;
    case ShapeKind::square:
      return std::abs(dx) <= o.size && std::abs(dy) <= o.size;
    case ShapeKind::triangle: {
      // upward triangle inscribed in the bounding square
      if (dy < -o.size || dy > o.size) return false;
      Scalar half_width = (dy + o.size) / 2.0;
      return std::abs(dx) <= half_width;
    }
  }
  return false;
}

struct Example {
  int h = 0, w = 0;
  std::vector<Scalar> image;  // 3*H*W planar, values in [0,1]
  std::string query;
  std::vector<uint8_t> mask;  // H*W, {0,1}
  std::vector<SceneObject> objects;
  int referent = -1;
};

// ---------- query grammar and its interpreter ----------

struct QueryConstraint {
  int color = -1;  // -1: unconstrained
  int shape = -1;
  int side = -1;  // 0 left, 1 right, 2 top, 3 bottom
};

inline const std::array<std::string, 4> kSideNames = {"left", "right", "top", "bottom"};

inline bool satisfies(const SceneObject& o, const QueryConstraint& q, int h, int w) {
  if (q.color >= 0 && o.color != q.color) return false;
  if (q.shape >= 0 && (int)o.shape != q.shape) return false;
  if (q.side >= 0) {
    switch (q.side) {
      case 0: if (!(o.cx < w / 2.0)) return false; break;
      case 1: if (!(o.cx >= w / 2.0)) return false; break;
      case 2: if (!(o.cy < h / 2.0)) return false; break;
      case 3: if (!(o.cy >= h / 2.0)) return false; break;
    }
  }
  return true;
}

// Exhaustive referent search; the unambiguity oracle.
inline std::vector<int> matching_objects(const std::vector<SceneObject>& objs,
                                         const QueryConstraint& q, int h, int w) {
  std::vector<int> out;
  for (size_t i = 0; i < objs.size(); ++i)
    if (satisfies(objs[i], q, h, w)) out.push_back((int)i);
  return out;
}

inline std::string render_query(const QueryConstraint& q) {
  std::string s;
  if (q.color >= 0) s += kColorNames[q.color];
  if (q.shape >= 0) {
    if (!s.empty()) s += " ";
    s += kShapeNames[q.shape];
  }
  if (q.side >= 0) s += " on the " + kSideNames[q.side];
  return s;
}

namespace detail {

inline void render_object(const SceneObject& o, int h, int w, std::vector<Scalar>& image,
                          std::vector<uint8_t>* mask) {
  long hw = (long)h * w;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (!object_contains(o, j + 0.5, i + 0.5)) continue;
      for (int c = 0; c < 3; ++c) image[c * hw + (long)i * w + j] = kColorRgb[o.color][c];
      if (mask) (*mask)[(long)i * w + j] = 1;
    }
}

}  // namespace detail

// Deterministic scene + query generation. Guarantees a unique referent by
// enumerating the grammar against the scene and keeping only unambiguous
// candidates; distractors sharing color or shape are injected by construction.
inline Example generate_example(uint64_t seed, const SceneSpec& spec) {
  Rng rng(seed);
  check(spec.h >= 8 && spec.w >= 8, "generate_example: canvas too small");
  check(spec.max_size * 2 < std::min(spec.h, spec.w), "generate_example: unsatisfiable spec");

  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    int count = rng.uniform_int(spec.min_objects, spec.max_objects);
    std::vector<SceneObject> objs;
    bool placed_all = true;
    for (int i = 0; i < count && placed_all; ++i) {
      SceneObject o;
      bool ok = false;
      for (int t = 0; t < 50; ++t) {
        o.size = rng.uniform(spec.min_size, spec.max_size);
        o.cx = rng.uniform(o.size + 0.5, spec.w - o.size - 0.5);
        o.cy = rng.uniform(o.size + 0.5, spec.h - o.size - 0.5);
        if (i >= 1 && rng.uniform_int(0, 1) == 1) {
          // distractor sharing color or shape with an earlier object
          const SceneObject& ref = objs[rng.uniform_int(0, i - 1)];
          if (rng.uniform_int(0, 1) == 0) {
            o.color = ref.color;
            o.shape = (ShapeKind)rng.uniform_int(0, 2);
          } else {
            o.shape = ref.shape;
            o.color = rng.uniform_int(0, 3);
          }
        } else {
          o.shape = (ShapeKind)rng.uniform_int(0, 2);
          o.color = rng.uniform_int(0, 3);
        }
        bool clash = false;
        for (const auto& other : objs) {
          Scalar dx = o.cx - other.cx, dy = o.cy - other.cy;
          Scalar need = o.size + other.size + spec.min_separation;
          if (dx * dx + dy * dy < need * need) {
            clash = true;
            break;
          }
        }
        if (!clash) {
          ok = true;
          break;
        }
      }
      if (!ok) placed_all = false;
      else objs.push_back(o);
    }
    if (!placed_all) continue;

    // enumerate the grammar; keep queries with exactly one referent
    std::vector<std::pair<QueryConstraint, int>> candidates;
    auto consider = [&](const QueryConstraint& q) {
      auto m = matching_objects(objs, q, spec.h, spec.w);
      if (m.size() == 1) candidates.push_back({q, m[0]});
    };
    for (int color = 0; color < 4; ++color)
      for (int shape = 0; shape < 3; ++shape) consider({color, shape, -1});
    for (int shape = 0; shape < 3; ++shape)
      for (int side = 0; side < 4; ++side) consider({-1, shape, side});
    for (int color = 0; color < 4; ++color)
      for (int shape = 0; shape < 3; ++shape)
        for (int side = 0; side < 4; ++side) consider({color, shape, side});
    if (candidates.empty()) continue;

    auto [q, referent] = candidates[rng.uniform_int(0, (int)candidates.size() - 1)];

    Example ex;
    ex.h = spec.h;
    ex.w = spec.w;
    ex.image.assign(3L * spec.h * spec.w, 0.08);  // dark background
    ex.mask.assign((long)spec.h * spec.w, 0);
    for (size_t i = 0; i < objs.size(); ++i)
      detail::render_object(objs[i], spec.h, spec.w, ex.image,
                            (int)i == referent ? &ex.mask : nullptr);
    ex.query = render_query(q);
    ex.objects = objs;
    ex.referent = referent;
    // quantize to the 8-bit grid so dataset round trips reproduce pixels exactly
    for (auto& v : ex.image) v = std::lround(v * 255.0) / 255.0;
    return ex;
  }
  throw ContractViolation("generate_example: could not build an unambiguous scene after " +
                          std::to_string(spec.max_retries) + " attempts");
}

// ---------- dataset files ----------

inline std::vector<uint8_t> image_to_bytes(const std::vector<Scalar>& image) {
  std::vector<uint8_t> out(image.size());
  for (size_t i = 0; i < image.size(); ++i)
    out[i] = (uint8_t)std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0);
  return out;
}

inline Tensor image_to_tensor(const Example& ex) {
  return Tensor({3, ex.h, ex.w}, ex.image);
}

inline Tensor mask_to_tensor(const Example& ex) {
  std::vector<Scalar> v(ex.mask.begin(), ex.mask.end());
  return Tensor({1, ex.h, ex.w}, std::move(v));
}

// Layout: images/NNNN.ppm, masks/NNNN.pgm, manifest.jsonl with one
// {"image","query","mask"} record per line.
inline void write_dataset(const std::vector<Example>& examples, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "masks", ec);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw IoError("cannot open manifest for writing in " + dir);
  for (size_t i = 0; i < examples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu", i);
    std::string img_rel = "images/" + std::string(name) + ".ppm";
    std::string mask_rel = "masks/" + std::string(name) + ".pgm";
    const Example& ex = examples[i];
    write_ppm((fs::path(dir) / img_rel).string(), image_to_bytes(ex.image), ex.h, ex.w);
    std::vector<uint8_t> m(ex.mask.size());
    for (size_t p = 0; p < m.size(); ++p) m[p] = ex.mask[p] ? 255 : 0;
    write_pgm((fs::path(dir) / mask_rel).string(), m, ex.h, ex.w);
    manifest << nlohmann::json{{"image", img_rel}, {"query", ex.query}, {"mask", mask_rel}}.dump()
             << "\n";
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir);
}

inline std::vector<Example> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open manifest: " + manifest_path);
  std::vector<Example> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError("malformed manifest line " + std::to_string(line_no) + " in " +
                    manifest_path + ": " + e.what());
    }
    check(rec.contains("image") && rec.contains("query") && rec.contains("mask"),
          "manifest line " + std::to_string(line_no) + " missing a required field");
    Example ex;
    std::string img_path = (fs::path(dir) / rec.at("image").get<std::string>()).string();
    std::string mask_path = (fs::path(dir) / rec.at("mask").get<std::string>()).string();
    int h, w;
    std::vector<uint8_t> rgb = read_ppm(img_path, h, w);
    ex.h = h;
    ex.w = w;
    ex.image.resize(rgb.size());
    for (size_t i = 0; i < rgb.size(); ++i) ex.image[i] = rgb[i] / 255.0;
    int mh, mw;
    std::vector<uint8_t> gray = read_pgm(mask_path, mh, mw);
    check(mh == h && mw == w, "mask size != image size for manifest line " +
                                  std::to_string(line_no));
    ex.mask.resize(gray.size());
    for (size_t i = 0; i < gray.size(); ++i) ex.mask[i] = gray[i] >= 128 ? 1 : 0;
    ex.query = rec.at("query").get<std::string>();
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dmn
