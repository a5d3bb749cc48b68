#include "featinv/metrics.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"

namespace featinv::metrics {

using nlohmann::json;

namespace {

constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

void require_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw_input(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
}

// Rec.601 luma on a (C,H,W) [0,255] image; single-channel passes through.
Tensor to_luma(const Tensor& img) {
  if (img.ndim() == 2) return img;
  if (img.ndim() != 3) throw_input("ssim expects (C,H,W) or (H,W)");
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (C == 1) return img.reshaped({H, W});
  if (C != 3) throw_input("ssim supports 1 or 3 channels");
  Tensor g({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      g.at(y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                   0.114 * img.at(2, y, x);
  return g;
}

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> win(kWin * kWin);
    const int half = kWin / 2;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        const double dy = i - half, dx = j - half;
        const double v = std::exp(-(dx * dx + dy * dy) /
                                  (2.0 * kWinSigma * kWinSigma));
        win[static_cast<size_t>(i) * kWin + j] = v;
        sum += v;
      }
    for (double& v : win) v /= sum;
    return win;
  }();
  return w;
}

}  // namespace

Tensor to_255(const Tensor& image01) {
  Tensor out = image01;
  out.clamp_(0.0, 1.0);
  out.scale_(255.0);
  return out;
}

double psnr(const Tensor& original, const Tensor& recon) {
  require_pair(original, recon, "psnr");
  const long n = original.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d = original[i] - recon[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCap;
  const double v = 10.0 * std::log10(255.0 * 255.0 / mse);
  return std::min(v, kPsnrCap);
}

double ssim(const Tensor& original, const Tensor& recon) {
  require_pair(original, recon, "ssim");
  const Tensor a = to_luma(original);
  const Tensor b = to_luma(recon);
  const int H = a.dim(0), W = a.dim(1);
  if (H < kWin || W < kWin)
    throw_input("ssim: image " + shape_str(original.shape()) +
                " smaller than the " + std::to_string(kWin) + "x" +
                std::to_string(kWin) + " window");
  const auto& win = gaussian_window();

  double acc = 0.0;
  long count = 0;
  for (int y = 0; y + kWin <= H; ++y) {
    for (int x = 0; x + kWin <= W; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = win[static_cast<size_t>(i) * kWin + j];
          mu_a += w * a.at(y + i, x + j);
          mu_b += w * b.at(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = win[static_cast<size_t>(i) * kWin + j];
          const double da = a.at(y + i, x + j) - mu_a;
          const double db = b.at(y + i, x + j) - mu_b;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      const double s = ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                       ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
      acc += s;
      ++count;
    }
  }
  const double mean = acc / static_cast<double>(count);
  return std::min(1.0, std::max(0.0, mean));
}

double inception_score(const std::vector<Tensor>& images01,
                       const Classifier& classifier) {
  if (images01.size() < 2)
    throw_input("inception_score requires at least 2 images");
  if (!classifier.predict) throw_input("inception_score: empty classifier");

  std::vector<std::vector<double>> probs;
  probs.reserve(images01.size());
  size_t classes = 0;
  for (const Tensor& img : images01) {
    std::vector<double> p = classifier.predict(img);
    if (classes == 0) classes = p.size();
    if (p.size() != classes || classes == 0)
      throw_contract("classifier returned inconsistent class counts");
    double sum = 0.0;
    for (double v : p) {
      if (v < -1e-9 || !std::isfinite(v))
        throw_contract("classifier output is not a probability simplex");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
      throw_contract("classifier output does not sum to 1 (got " +
                     std::to_string(sum) + ")");
    probs.push_back(std::move(p));
  }

  std::vector<double> marginal(classes, 0.0);
  for (const auto& p : probs)
    for (size_t c = 0; c < classes; ++c) marginal[c] += p[c];
  for (double& v : marginal) v /= static_cast<double>(probs.size());

  double mean_kl = 0.0;
  for (const auto& p : probs) {
    double kl = 0.0;
    for (size_t c = 0; c < classes; ++c) {
      if (p[c] > 0 && marginal[c] > 0)
        kl += p[c] * std::log(p[c] / marginal[c]);
    }
    mean_kl += kl;
  }
  mean_kl /= static_cast<double>(probs.size());
  return std::exp(mean_kl);
}

MetricsReport evaluate(const std::vector<Tensor>& originals255,
                       const std::vector<Tensor>& recons255,
                       const std::vector<Tensor>& recons01,
                       const Classifier& classifier,
                       const std::vector<std::string>& ids) {
  if (originals255.size() != recons255.size() ||
      recons255.size() != recons01.size())
    throw_input("evaluate: original/recon counts differ (" +
                std::to_string(originals255.size()) + " vs " +
                std::to_string(recons255.size()) + ")");
  if (!ids.empty() && ids.size() != originals255.size())
    throw_input("evaluate: id count mismatch");

  MetricsReport rep;
  rep.classifier_name = classifier.name;
  for (size_t i = 0; i < originals255.size(); ++i) {
    PerImage pi;
    pi.id = ids.empty() ? std::to_string(i) : ids[i];
    pi.psnr = psnr(originals255[i], recons255[i]);
    pi.ssim = ssim(originals255[i], recons255[i]);
    rep.per_image.push_back(pi);
    rep.mean_psnr += pi.psnr;
    rep.mean_ssim += pi.ssim;
  }
  rep.mean_psnr /= static_cast<double>(rep.per_image.size());
  rep.mean_ssim /= static_cast<double>(rep.per_image.size());
  rep.inception_score = recons01.size() >= 2
                            ? inception_score(recons01, classifier)
                            : 1.0;
  return rep;
}

std::string MetricsReport::to_json() const {
  json j;
  j["classifier"] = classifier_name;
  j["aggregate"] = {{"mean_psnr", mean_psnr},
                    {"mean_ssim", mean_ssim},
                    {"inception_score", inception_score}};
  json rows = json::array();
  for (const auto& pi : per_image)
    rows.push_back({{"id", pi.id}, {"psnr", pi.psnr}, {"ssim", pi.ssim}});
  j["per_image"] = rows;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport rep;
  rep.classifier_name = j.at("classifier").get<std::string>();
  rep.mean_psnr = j.at("aggregate").at("mean_psnr").get<double>();
  rep.mean_ssim = j.at("aggregate").at("mean_ssim").get<double>();
  rep.inception_score = j.at("aggregate").at("inception_score").get<double>();
  for (const auto& row : j.at("per_image")) {
    PerImage pi;
    pi.id = row.at("id").get<std::string>();
    pi.psnr = row.at("psnr").get<double>();
    pi.ssim = row.at("ssim").get<double>();
    rep.per_image.push_back(pi);
  }
  return rep;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "id,psnr,ssim\n";
  os.precision(17);
  for (const auto& pi : per_image)
    os << pi.id << "," << pi.psnr << "," << pi.ssim << "\n";
  os << "mean," << mean_psnr << "," << mean_ssim << "\n";
  os << "inception_score," << inception_score << ",\n";
  return os.str();
}

}  // namespace featinv::metrics
