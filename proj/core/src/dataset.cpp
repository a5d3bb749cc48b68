#include "featinv/dataset.hpp"

#include <cmath>

#include "featinv/error.hpp"
#include "featinv/rng.hpp"

namespace featinv::data {

namespace {

constexpr int kH = 32;
constexpr int kW = 32;
constexpr double kTwoPi = 6.283185307179586476925286766559;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct PatternParams {
  int label = 0;
  double freq_x = 1, freq_y = 1, phase_x = 0, phase_y = 0;
  double cx = 16, cy = 16, radius = 8, edge = 2;
  double amp[3] = {1, 1, 1};
  double base[3] = {0.5, 0.5, 0.5};
  double fg[3] = {1, 1, 1}, bg[3] = {0, 0, 0};
};

PatternParams draw_params(Rng& rng, int label) {
  PatternParams p;
  p.label = label;
  p.freq_x = rng.uniform(1.0, 3.0);
  p.freq_y = rng.uniform(1.0, 3.0);
  p.phase_x = rng.uniform(0.0, kTwoPi);
  p.phase_y = rng.uniform(0.0, kTwoPi);
  p.cx = rng.uniform(8.0, 24.0);
  p.cy = rng.uniform(8.0, 24.0);
  p.radius = rng.uniform(5.0, 11.0);
  p.edge = rng.uniform(1.5, 3.0);
  for (int c = 0; c < 3; ++c) {
    p.amp[c] = rng.uniform(0.35, 1.0);
    p.base[c] = rng.uniform(0.35, 0.65);
    p.fg[c] = rng.uniform(0.6, 1.0);
    p.bg[c] = rng.uniform(0.0, 0.4);
  }
  return p;
}

// Continuous pattern value in [0,1]; (x,y) may be shifted off-grid.
double pattern_value(const PatternParams& p, int c, double y, double x) {
  switch (p.label) {
    case 0:  // horizontal stripes
      return p.base[c] +
             0.5 * p.amp[c] * std::sin(kTwoPi * p.freq_y * y / kH + p.phase_y);
    case 1:  // vertical stripes
      return p.base[c] +
             0.5 * p.amp[c] * std::sin(kTwoPi * p.freq_x * x / kW + p.phase_x);
    case 2: {  // soft disk
      const double r = std::hypot(x - p.cx, y - p.cy);
      const double m = sigmoid((p.radius - r) / p.edge);
      return p.bg[c] + (p.fg[c] - p.bg[c]) * m;
    }
    default: {  // smooth checker
      const double vx = std::sin(kTwoPi * p.freq_x * x / kW + p.phase_x);
      const double vy = std::sin(kTwoPi * p.freq_y * y / kH + p.phase_y);
      return p.base[c] + 0.5 * p.amp[c] * vx * vy;
    }
  }
}

Tensor render(const PatternParams& p, double dx, double dy) {
  Tensor img({3, kH, kW});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kH; ++y)
      for (int x = 0; x < kW; ++x)
        img.at(c, y, x) = pattern_value(p, c, y + dy, x + dx);
  return img;
}

Tensor standardize(const Tensor& t) {
  const double mu = t.mean();
  const double sigma = std::sqrt(t.var_pop());
  if (!(sigma > 1e-12)) throw_numeric("degenerate sample pattern");
  Tensor out(t.shape());
  for (long i = 0; i < t.size(); ++i) out[i] = (t[i] - mu) / sigma;
  return out;
}

Sample finish(const PatternParams& p, double dx, double dy,
              const splitnet::Preprocessing& pre) {
  Sample s;
  s.label = p.label;
  s.model = standardize(pre.apply(render(p, dx, dy)));
  s.pixels = to_pixels(s.model, pre);
  return s;
}

}  // namespace

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"stripes_h", "stripes_v",
                                                 "disk", "checker"};
  return names;
}

Tensor to_pixels(const Tensor& model, const splitnet::Preprocessing& pre) {
  Tensor px = pre.invert(model);
  px.clamp_(0.0, 1.0);
  return px;
}

Sample make_sample(std::uint64_t seed, const splitnet::Preprocessing& pre,
                   int label, double dx, double dy) {
  Rng rng(Rng::derive(seed, "desk_sample"));
  const int lbl = label < 0 ? rng.uniform_int(0, kNumClasses - 1) : label;
  if (lbl >= kNumClasses) throw_input("label out of range");
  const PatternParams p = draw_params(rng, lbl);
  return finish(p, dx, dy, pre);
}

std::vector<Sample> generate(int count, std::uint64_t seed,
                             const splitnet::Preprocessing& pre) {
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(make_sample(seed + static_cast<std::uint64_t>(i) * 7919,
                              pre, i % kNumClasses));
  return out;
}

std::vector<Sample> frame_group(std::uint64_t seed, int k, double shift_px,
                                const splitnet::Preprocessing& pre,
                                int label) {
  if (k < 1) throw_input("frame_group requires k >= 1");
  Rng rng(Rng::derive(seed, "desk_frames"));
  const int lbl = label < 0 ? rng.uniform_int(0, kNumClasses - 1) : label;
  const PatternParams p = draw_params(rng, lbl);
  std::vector<Sample> frames;
  frames.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i)
    frames.push_back(finish(p, shift_px * i, shift_px * i, pre));
  return frames;
}

}  // namespace featinv::data
