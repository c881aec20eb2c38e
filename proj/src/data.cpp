#include "drsan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace drsan {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Blob {
  double x, y;      // center
  double r;         // major semi-axis
  double bright;
};

void render_blob(Image& img, const Blob& b, double angle, double aspect) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double a2 = b.r * b.r;
  const double b2 = (b.r * aspect) * (b.r * aspect);
  const int lo_x = std::max(0, static_cast<int>(std::floor(b.x - b.r - 1)));
  const int hi_x = std::min(img.w - 1, static_cast<int>(std::ceil(b.x + b.r + 1)));
  const int lo_y = std::max(0, static_cast<int>(std::floor(b.y - b.r - 1)));
  const int hi_y = std::min(img.h - 1, static_cast<int>(std::ceil(b.y + b.r + 1)));
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      const double dx = x - b.x, dy = y - b.y;
      // project onto the blob's rotated axes
      const double u = dx * ca + dy * sa;
      const double v = -dx * sa + dy * ca;
      const double d = u * u / a2 + v * v / b2;
      if (d >= 1.0) continue;
      const double val = b.bright * (1.0 - d) * (1.0 - d);
      img.at(y, x) = std::min(1.0, img.at(y, x) + val);
    }
  }
}

}  // namespace

std::vector<Sample> gen_synthetic(const SceneConfig& cfg, int count) {
  if (cfg.count_min < 1)
    throw std::invalid_argument("gen_synthetic: count_min must be >= 1");
  if (cfg.radius_min <= 0 || cfg.radius_max < cfg.radius_min)
    throw std::invalid_argument("gen_synthetic: bad radius range");

  std::vector<Sample> out(static_cast<size_t>(count));
  parallel_for(count, [&](int idx) {
    SplitMix64 rng(cfg.seed ^ static_cast<std::uint64_t>(idx));
    Sample s;
    s.image.h = cfg.height;
    s.image.w = cfg.width;
    s.image.v.assign(static_cast<size_t>(cfg.height) * cfg.width, 0.0);

    const double rot =
        rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * kPi / 180.0;
    // perspective axis: heads shrink toward the "far" end, which is the image
    // top rotated by the scene angle
    const double axx = std::sin(rot), axy = std::cos(rot);
    const double cx0 = cfg.width / 2.0, cy0 = cfg.height / 2.0;
    const double half_span =
        0.5 * std::hypot(static_cast<double>(cfg.width), static_cast<double>(cfg.height));

    const int n_heads = cfg.count_min + rng.uniform_int(cfg.count_max - cfg.count_min + 1);
    std::vector<Blob> blobs;
    blobs.reserve(static_cast<size_t>(n_heads));
    for (int i = 0; i < n_heads; ++i) {
      Blob b{};
      for (int attempt = 0; attempt < 40; ++attempt) {
        const double margin = cfg.radius_max + 1.0;
        b.x = rng.uniform(margin, cfg.width - margin);
        b.y = rng.uniform(margin, cfg.height - margin);
        // how far along the perspective axis, 0 = far end, 1 = near end
        const double t = 0.5 + ((b.x - cx0) * axx + (b.y - cy0) * axy) /
                                   (2.0 * half_span);
        const double shrink = 1.0 - cfg.perspective * (1.0 - std::clamp(t, 0.0, 1.0));
        b.r = rng.uniform(cfg.radius_min, cfg.radius_max) * shrink;
        b.r = std::max(b.r, 0.8);
        bool ok = true;
        for (const Blob& other : blobs) {
          const double need = cfg.min_separation * (b.r + other.r);
          const double dx = b.x - other.x, dy = b.y - other.y;
          if (dx * dx + dy * dy < need * need) {
            ok = false;
            break;
          }
        }
        if (ok) break;
      }
      b.bright = rng.uniform(0.55, 1.0);
      blobs.push_back(b);
    }

    for (const Blob& b : blobs) render_blob(s.image, b, rot, cfg.aspect);

    if (cfg.noise > 0)
      for (double& v : s.image.v)
        v = std::clamp(v + cfg.noise * rng.uniform(-1.0, 1.0), 0.0, 1.0);

    char name[32];
    std::snprintf(name, sizeof(name), "%03d", idx);
    s.ann.image_id = name;
    s.ann.width = cfg.width;
    s.ann.height = cfg.height;
    for (const Blob& b : blobs) s.ann.points.emplace_back(b.x, b.y);
    out[static_cast<size_t>(idx)] = std::move(s);
  });
  return out;
}

Sample augment_crop_resize(const Sample& s, double frac_lo, double frac_hi,
                           int out_h, int out_w, SplitMix64& rng) {
  if (!(frac_lo > 0 && frac_lo <= frac_hi && frac_hi <= 1.0))
    throw std::invalid_argument("augment_crop_resize: bad fraction range");

  const int src_h = s.image.h, src_w = s.image.w;
  int crop_h = 0, crop_w = 0, off_x = 0, off_y = 0;
  std::vector<std::pair<double, double>> kept;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double frac = rng.uniform(frac_lo, frac_hi);
    crop_h = std::max(2, static_cast<int>(std::lround(frac * src_h)));
    crop_w = std::max(2, static_cast<int>(std::lround(frac * src_w)));
    crop_h = std::min(crop_h, src_h);
    crop_w = std::min(crop_w, src_w);
    off_y = rng.uniform_int(src_h - crop_h + 1);
    off_x = rng.uniform_int(src_w - crop_w + 1);
    kept.clear();
    for (const auto& [x, y] : s.ann.points)
      if (x >= off_x && x < off_x + crop_w && y >= off_y && y < off_y + crop_h)
        kept.emplace_back(x - off_x, y - off_y);
    if (!kept.empty() || s.ann.points.empty()) break;
  }

  Sample out;
  out.ann.image_id = s.ann.image_id;
  out.ann.width = out_w;
  out.ann.height = out_h;
  const double sx = static_cast<double>(out_w) / crop_w;
  const double sy = static_cast<double>(out_h) / crop_h;
  for (const auto& [x, y] : kept)
    out.ann.points.emplace_back(std::min(x * sx, out_w - 1e-9),
                                std::min(y * sy, out_h - 1e-9));

  out.image.h = out_h;
  out.image.w = out_w;
  out.image.v.assign(static_cast<size_t>(out_h) * out_w, 0.0);
  // align-corners bilinear resize of the cropped window
  for (int y = 0; y < out_h; ++y) {
    const double py = off_y + (out_h == 1 ? 0.0
                                          : static_cast<double>(y) * (crop_h - 1) /
                                                (out_h - 1));
    const int y0 = std::min(static_cast<int>(std::floor(py)), src_h - 1);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double fy = py - y0;
    for (int x = 0; x < out_w; ++x) {
      const double px = off_x + (out_w == 1 ? 0.0
                                            : static_cast<double>(x) * (crop_w - 1) /
                                                  (out_w - 1));
      const int x0 = std::min(static_cast<int>(std::floor(px)), src_w - 1);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double fx = px - x0;
      const double top = s.image.at(y0, x0) * (1 - fx) + s.image.at(y0, x1) * fx;
      const double bot = s.image.at(y1, x0) * (1 - fx) + s.image.at(y1, x1) * fx;
      out.image.at(y, x) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

// ---- persistence ----

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.w));
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      row[static_cast<size_t>(x)] = static_cast<unsigned char>(
          std::clamp(std::lround(img.at(y, x) * 255.0), 0l, 255l));
    f.write(reinterpret_cast<const char*>(row.data()), img.w);
  }
  if (!f) throw std::runtime_error("write_pgm: short write to " + path);
}

namespace {

int pgm_next_int(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comment lines
  for (;;) {
    const int c = in.peek();
    if (c == EOF) throw std::runtime_error("read_pgm: truncated header in " + path);
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string junk;
      std::getline(in, junk);
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("read_pgm: bad header field in " + path);
  return v;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw std::runtime_error("read_pgm: " + path + " is not binary PGM (P5)");
  const int w = pgm_next_int(f, path);
  const int h = pgm_next_int(f, path);
  const int maxval = pgm_next_int(f, path);
  if (maxval <= 0 || maxval > 255)
    throw std::runtime_error("read_pgm: unsupported maxval in " + path);
  f.get();  // single whitespace after maxval
  Image img;
  img.h = h;
  img.w = w;
  img.v.resize(static_cast<size_t>(h) * w);
  std::vector<unsigned char> buf(img.v.size());
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("read_pgm: truncated pixel data in " + path);
  for (size_t i = 0; i < buf.size(); ++i)
    img.v[i] = static_cast<double>(buf[i]) / maxval;
  return img;
}

void save_annotations(const std::vector<Annotation>& anns,
                      const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const Annotation& a : anns) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [x, y] : a.points) pts.push_back({x, y});
    doc.push_back({{"image", "images/" + a.image_id + ".pgm"},
                   {"width", a.width},
                   {"height", a.height},
                   {"points", pts}});
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_annotations: cannot open " + path);
  f << doc.dump(2) << "\n";
}

std::vector<Annotation> load_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_annotations: cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw AnnotationError("load_annotations: " + path + ": " + e.what());
  }
  if (!doc.is_array())
    throw AnnotationError("load_annotations: " + path +
                          ": top level must be a list");
  std::vector<Annotation> out;
  for (size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    try {
      Annotation a;
      a.image_id = e.at("image").get<std::string>();
      a.width = e.at("width").get<int>();
      a.height = e.at("height").get<int>();
      if (a.width <= 0 || a.height <= 0)
        throw AnnotationError("non-positive extents");
      for (const auto& p : e.at("points")) {
        if (!p.is_array() || p.size() != 2)
          throw AnnotationError("point must be [x,y]");
        const double x = p[0].get<double>(), y = p[1].get<double>();
        if (!(x >= 0 && x < a.width && y >= 0 && y < a.height))
          throw AnnotationError("point (" + std::to_string(x) + ", " +
                                std::to_string(y) + ") outside " +
                                std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " image");
        a.points.emplace_back(x, y);
      }
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& ex) {
      throw AnnotationError("load_annotations: " + path + ": entry " +
                            std::to_string(i) + ": " + ex.what());
    } catch (const AnnotationError& ex) {
      throw AnnotationError("load_annotations: " + path + ": entry " +
                            std::to_string(i) + ": " + ex.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  std::vector<Annotation> anns;
  for (const Sample& s : samples) {
    write_pgm(s.image, (fs::path(dir) / "images" / (s.ann.image_id + ".pgm")).string());
    anns.push_back(s.ann);
  }
  save_annotations(anns, (fs::path(dir) / "annotations.json").string());
}

std::vector<Sample> load_dataset(const std::string& annotations_path) {
  const fs::path base = fs::path(annotations_path).parent_path();
  std::vector<Annotation> anns = load_annotations(annotations_path);
  std::vector<Sample> out(anns.size());
  parallel_for(static_cast<int>(anns.size()), [&](int i) {
    Sample s;
    s.ann = anns[static_cast<size_t>(i)];
    const fs::path img_path = base / s.ann.image_id;
    s.image = read_pgm(img_path.string());
    if (s.image.w != s.ann.width || s.image.h != s.ann.height)
      throw AnnotationError("load_dataset: image " + img_path.string() +
                            " extents disagree with its annotation");
    // keep the id as the bare stem for output naming
    s.ann.image_id = img_path.stem().string();
    out[static_cast<size_t>(i)] = std::move(s);
  });
  return out;
}

}  // namespace drsan
