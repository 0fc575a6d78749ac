#include "tinytrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "tinytrack/rng.hpp"

namespace tinytrack::synth {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Two-octave value noise: random lattice values, bilinearly interpolated.
Image make_background(int w, int h, Rng rng) {
  Image img(w, h, 0.45);
  for (const auto& [cell, amp] : {std::pair{24, 0.16}, std::pair{7, 0.06}}) {
    const int gw = w / cell + 2;
    const int gh = h / cell + 2;
    std::vector<double> lattice(static_cast<size_t>(gw) * gh);
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < h; ++y) {
      const double gy = static_cast<double>(y) / cell;
      const int y0 = static_cast<int>(gy);
      const double ty = gy - y0;
      for (int x = 0; x < w; ++x) {
        const double gx = static_cast<double>(x) / cell;
        const int x0 = static_cast<int>(gx);
        const double tx = gx - x0;
        const double v00 = lattice[static_cast<size_t>(y0) * gw + x0];
        const double v10 = lattice[static_cast<size_t>(y0) * gw + x0 + 1];
        const double v01 = lattice[static_cast<size_t>(y0 + 1) * gw + x0];
        const double v11 = lattice[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v10) +
                         ty * ((1 - tx) * v01 + tx * v11);
        img.at(x, y) += amp * v;
      }
    }
  }
  return img;
}

// Ring texture, point-symmetric about the sprite center so the intensity
// centroid of the rendered sprite coincides with the box center.
double ring_texture(double dx, double dy, double size) {
  const double r = std::sqrt(dx * dx + dy * dy) / (0.5 * size);
  return 0.55 + 0.45 * std::cos(3.0 * kPi * r);
}

// Exact overlap of the pixel cell [px,px+1)x[py,py+1) with an axis-aligned rect.
double cell_coverage_rect(int px, int py, double x1, double y1, double x2, double y2) {
  const double ox = std::min<double>(px + 1.0, x2) - std::max<double>(px, x1);
  const double oy = std::min<double>(py + 1.0, y2) - std::max<double>(py, y1);
  if (ox <= 0.0 || oy <= 0.0) return 0.0;
  return ox * oy;
}

struct Sprite {
  double cx = 0, cy = 0;
  double size = 0;
  SpriteShape shape = SpriteShape::square;
  double brightness = 1.0;  // texture multiplier, distractors run dimmer
};

// Composite one sprite onto the canvas with per-pixel coverage blending.
void render_sprite(Image& canvas, const Sprite& s) {
  const double x1 = s.cx - 0.5 * s.size;
  const double y1 = s.cy - 0.5 * s.size;
  const double x2 = s.cx + 0.5 * s.size;
  const double y2 = s.cy + 0.5 * s.size;
  const int px1 = std::max(0, static_cast<int>(std::floor(x1)));
  const int py1 = std::max(0, static_cast<int>(std::floor(y1)));
  const int px2 = std::min(canvas.width - 1, static_cast<int>(std::ceil(x2)));
  const int py2 = std::min(canvas.height - 1, static_cast<int>(std::ceil(y2)));
  const double radius = 0.5 * s.size;
  for (int py = py1; py <= py2; ++py) {
    for (int px = px1; px <= px2; ++px) {
      double cov = 0.0;
      if (s.shape == SpriteShape::square) {
        cov = cell_coverage_rect(px, py, x1, y1, x2, y2);
      } else {
        // 4x4 supersampled disk coverage.
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy) {
          for (int sx = 0; sx < 4; ++sx) {
            const double qx = px + (sx + 0.5) / 4.0 - s.cx;
            const double qy = py + (sy + 0.5) / 4.0 - s.cy;
            if (qx * qx + qy * qy <= radius * radius) ++hits;
          }
        }
        cov = hits / 16.0;
      }
      if (cov <= 0.0) continue;
      const double tex =
          s.brightness * ring_texture(px + 0.5 - s.cx, py + 0.5 - s.cy, s.size);
      canvas.at(px, py) = (1.0 - cov) * canvas.at(px, py) + cov * tex;
    }
  }
}

struct Trajectory {
  std::vector<double> xs, ys;   // center positions per frame
  std::vector<double> vxs, vys; // per-frame velocity used for blur direction
  bool left_view = false;       // sprite overhung an image edge at some frame
};

Trajectory make_trajectory(const SynthConfig& cfg, Rng rng) {
  Trajectory t;
  const double margin = 0.5 * cfg.object_size + 2.0;
  double x = rng.uniform(margin, cfg.image_width - margin);
  double y = rng.uniform(margin, cfg.image_height - margin);
  const double heading = rng.uniform(0.0, 2.0 * kPi);
  double vx = cfg.speed * std::cos(heading);
  double vy = cfg.speed * std::sin(heading);
  for (int f = 0; f < cfg.frames; ++f) {
    if (cfg.motion == MotionKind::abrupt && f > 0 && f % 8 == 0) {
      const double a = rng.uniform(0.0, 2.0 * kPi);
      const double mag = cfg.speed * rng.uniform(0.5, 1.0);
      vx = mag * std::cos(a);
      vy = mag * std::sin(a);
    }
    t.xs.push_back(x);
    t.ys.push_back(y);
    t.vxs.push_back(vx);
    t.vys.push_back(vy);
    if (x - 0.5 * cfg.object_size < 0 || x + 0.5 * cfg.object_size > cfg.image_width ||
        y - 0.5 * cfg.object_size < 0 || y + 0.5 * cfg.object_size > cfg.image_height) {
      t.left_view = true;
    }
    x += vx;
    y += vy;
    // Reflect the center off the image border so the sprite never fully exits.
    if (x < 0.0) { x = -x; vx = -vx; }
    if (x > cfg.image_width) { x = 2.0 * cfg.image_width - x; vx = -vx; }
    if (y < 0.0) { y = -y; vy = -vy; }
    if (y > cfg.image_height) { y = 2.0 * cfg.image_height - y; vy = -vy; }
  }
  return t;
}

void validate_config(const SynthConfig& cfg) {
  if (cfg.object_size < 2.0) throw std::invalid_argument("synth: object_size must be >= 2");
  if (cfg.frames < 2) throw std::invalid_argument("synth: frames must be >= 2");
  if (cfg.image_width < 8 || cfg.image_height < 8) {
    throw std::invalid_argument("synth: image too small");
  }
  if (!(cfg.illumination_drop > 0.0) || cfg.illumination_drop > 1.0) {
    throw std::invalid_argument("synth: illumination_drop must be in (0, 1]");
  }
  if (cfg.speed < 0.0) throw std::invalid_argument("synth: speed must be >= 0");
  if (cfg.distractor_count < 0) throw std::invalid_argument("synth: distractor_count < 0");
  if (cfg.blur_radius < 0) throw std::invalid_argument("synth: blur_radius < 0");
  if (cfg.occluder && (cfg.occluder->period <= 0 || cfg.occluder->duration <= 0)) {
    throw std::invalid_argument("synth: occluder period/duration must be positive");
  }
}

}  // namespace

SynthSequence generate_sequence(const SynthConfig& cfg) {
  validate_config(cfg);
  Rng root(cfg.seed);
  const Image background = make_background(cfg.image_width, cfg.image_height, root.fork(1));
  const Trajectory target = make_trajectory(cfg, root.fork(2));

  std::vector<Trajectory> distractors;
  for (int d = 0; d < cfg.distractor_count; ++d) {
    SynthConfig dcfg = cfg;
    dcfg.motion = MotionKind::linear;
    dcfg.speed = std::max(0.5, cfg.speed * 0.6);
    distractors.push_back(make_trajectory(dcfg, root.fork(100 + d)));
  }

  Rng noise_stream = root.fork(3);

  SynthSequence out;
  out.background = background;
  out.record.name = cfg.name;
  out.record.class_label = cfg.class_label;

  const int dim_start = cfg.frames / 3;
  const int dim_ramp = std::max(1, cfg.frames / 6);

  for (int f = 0; f < cfg.frames; ++f) {
    Image frame = background;

    for (size_t d = 0; d < distractors.size(); ++d) {
      Sprite ds{distractors[d].xs[f], distractors[d].ys[f], cfg.object_size * 1.15,
                cfg.shape, 0.85};
      render_sprite(frame, ds);
    }

    const bool occluded =
        cfg.occluder && (f % cfg.occluder->period) < cfg.occluder->duration && f > 0;

    const Sprite sprite{target.xs[f], target.ys[f], cfg.object_size, cfg.shape, 1.0};
    if (cfg.blur_radius > 0) {
      // Temporal average: render the sprite at symmetric sub-offsets along
      // the velocity, which keeps the blurred centroid on the box center.
      Image sprite_layer = frame;
      const int taps = 2 * cfg.blur_radius + 1;
      Image acc(frame.width, frame.height, 0.0);
      const double speed = std::hypot(target.vxs[f], target.vys[f]);
      const double ux = speed > 1e-9 ? target.vxs[f] / speed : 1.0;
      const double uy = speed > 1e-9 ? target.vys[f] / speed : 0.0;
      const double span = std::min(speed, cfg.object_size);
      for (int k = -cfg.blur_radius; k <= cfg.blur_radius; ++k) {
        Image pass = sprite_layer;
        const double off = span * static_cast<double>(k) / taps;
        Sprite s = sprite;
        s.cx += off * ux;
        s.cy += off * uy;
        render_sprite(pass, s);
        for (size_t i = 0; i < acc.px.size(); ++i) acc.px[i] += pass.px[i] / taps;
      }
      frame = acc;
    } else {
      render_sprite(frame, sprite);
    }

    if (occluded) {
      // Opaque block slightly larger than the sprite, drawn over it.
      const double pad = 0.35 * cfg.object_size;
      const int ox1 = std::max(0, static_cast<int>(std::floor(sprite.cx - 0.5 * cfg.object_size - pad)));
      const int oy1 = std::max(0, static_cast<int>(std::floor(sprite.cy - 0.5 * cfg.object_size - pad)));
      const int ox2 = std::min(frame.width - 1, static_cast<int>(std::ceil(sprite.cx + 0.5 * cfg.object_size + pad)));
      const int oy2 = std::min(frame.height - 1, static_cast<int>(std::ceil(sprite.cy + 0.5 * cfg.object_size + pad)));
      for (int y = oy1; y <= oy2; ++y)
        for (int x = ox1; x <= ox2; ++x) frame.at(x, y) = 0.08;
    }

    if (cfg.illumination_drop < 1.0) {
      // Ramp the global gain down to the configured floor mid-sequence.
      double gain = 1.0;
      if (f >= dim_start) {
        const double t = std::min(1.0, static_cast<double>(f - dim_start) / dim_ramp);
        gain = 1.0 + t * (cfg.illumination_drop - 1.0);
      }
      for (auto& v : frame.px) v *= gain;
    }

    if (cfg.noise_sigma > 0.0) {
      for (auto& v : frame.px) v += noise_stream.normal(0.0, cfg.noise_sigma);
    }
    for (auto& v : frame.px) v = std::clamp(v, 0.0, 1.0);

    const BoundingBox raw{target.xs[f] - 0.5 * cfg.object_size,
                          target.ys[f] - 0.5 * cfg.object_size, cfg.object_size,
                          cfg.object_size};
    BoundingBox box = raw.clipped(cfg.image_width, cfg.image_height);
    out.record.annotations.push_back(
        data::FrameAnnotation{f, box, cfg.image_width, cfg.image_height});
    out.frames.push_back(std::move(frame));
  }

  double max_step = 0.0;
  for (int f = 1; f < cfg.frames; ++f) {
    max_step = std::max(max_step, std::hypot(target.xs[f] - target.xs[f - 1],
                                             target.ys[f] - target.ys[f - 1]));
  }

  auto& attrs = out.record.attributes;
  attrs[data::Attr::FM] = max_step > cfg.object_size || cfg.motion == MotionKind::fast;
  attrs[data::Attr::AM] = cfg.motion == MotionKind::abrupt;
  attrs[data::Attr::MB] = cfg.blur_radius > 0;
  attrs[data::Attr::OV] = target.left_view;
  attrs[data::Attr::FO] = cfg.occluder.has_value();
  attrs[data::Attr::SO] = cfg.distractor_count > 0;
  attrs[data::Attr::IV] = cfg.illumination_drop < 1.0;
  attrs[data::Attr::LI] = cfg.illumination_drop <= 0.5;
  return out;
}

void write_dataset(const std::filesystem::path& root,
                   const std::vector<SynthConfig>& configs) {
  std::filesystem::create_directories(root);
  for (const auto& cfg : configs) {
    SynthSequence seq = generate_sequence(cfg);
    const auto dir = root / seq.record.name;
    data::write_sequence_metadata(dir, seq.record);
    const auto img_dir = dir / "img";
    std::filesystem::create_directories(img_dir);
    for (size_t f = 0; f < seq.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "%08zu.pgm", f + 1);
      write_pgm(seq.frames[f], img_dir / name);
    }
  }
}

std::vector<SynthConfig> mini_benchmark_train_configs(int count, std::uint64_t seed) {
  std::vector<SynthConfig> configs;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    SynthConfig cfg;
    cfg.image_width = 320;
    cfg.image_height = 240;
    cfg.object_size = rng.uniform(40.0, 64.0);
    cfg.shape = (i % 3 == 0) ? SpriteShape::disk : SpriteShape::square;
    cfg.motion = MotionKind::linear;
    cfg.speed = rng.uniform(1.0, 3.0);
    cfg.frames = 24;
    cfg.noise_sigma = 0.01;
    cfg.seed = rng.next_u64();
    char name[32];
    std::snprintf(name, sizeof(name), "train_%03d", i);
    cfg.name = name;
    cfg.class_label = (i % 3 == 0) ? "disk" : "square";
    configs.push_back(cfg);
  }
  return configs;
}

std::vector<SynthConfig> mini_benchmark_test_configs(int count, std::uint64_t seed) {
  std::vector<SynthConfig> configs;
  Rng rng(seed + 0x51ed);
  for (int i = 0; i < count; ++i) {
    SynthConfig cfg;
    cfg.image_width = 320;
    cfg.image_height = 240;
    cfg.object_size = rng.uniform(12.0, 18.0);
    cfg.shape = (i % 3 == 0) ? SpriteShape::disk : SpriteShape::square;
    cfg.motion = MotionKind::linear;
    cfg.speed = rng.uniform(0.5, 2.0);
    cfg.frames = 30;
    cfg.noise_sigma = 0.01;
    cfg.seed = rng.next_u64();
    char name[32];
    std::snprintf(name, sizeof(name), "test_%03d", i);
    cfg.name = name;
    cfg.class_label = (i % 3 == 0) ? "disk" : "square";
    configs.push_back(cfg);
  }
  return configs;
}

}  // namespace tinytrack::synth
