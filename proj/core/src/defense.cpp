#include "featinv/defense.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "featinv/error.hpp"
#include "featinv/metrics.hpp"
#include "featinv/rng.hpp"

namespace featinv::defense {

void DefenseConfig::validate() const {
  if (sigma < 0) throw_config("defense sigma must be >= 0");
  if (noise_kind != "gaussian" && noise_kind != "laplace")
    throw_config("noise_kind must be gaussian or laplace, got '" +
                 noise_kind + "'");
}

splitnet::FeatureTensor perturb_features(const splitnet::FeatureTensor& z,
                                         const DefenseConfig& d) {
  d.validate();
  if (d.sigma == 0.0) return z;
  splitnet::FeatureTensor out = z;
  Rng rng(Rng::derive(d.seed, "feature_noise"));
  if (d.noise_kind == "gaussian") {
    for (long i = 0; i < out.values.size(); ++i)
      out.values[i] += d.sigma * rng.normal();
  } else {
    // Laplace with std sigma has scale sigma/sqrt(2)
    const double b = d.sigma / std::sqrt(2.0);
    for (long i = 0; i < out.values.size(); ++i)
      out.values[i] += b * rng.laplace();
  }
  return out;
}

std::vector<TradeoffRow> tradeoff_sweep(const splitnet::SplitModel& sm,
                                        const std::vector<data::Sample>& samples,
                                        const AttackFn& attack,
                                        std::vector<double> sigmas,
                                        const SweepOptions& opts) {
  if (sigmas.empty()) throw_input("tradeoff_sweep: empty sigma list");
  if (samples.empty()) throw_input("tradeoff_sweep: no samples");
  std::sort(sigmas.begin(), sigmas.end());

  const auto& pre = sm.base().preprocessing;
  const int n_attack =
      std::min<int>(opts.attack_images, static_cast<int>(samples.size()));

  std::vector<TradeoffRow> rows;
  for (size_t si = 0; si < sigmas.size(); ++si) {
    TradeoffRow row;
    row.sigma = sigmas[si];

    // utility: cloud-side accuracy under noise, averaged over noise seeds
    double correct = 0.0, total = 0.0;
    for (std::uint64_t seed : opts.accuracy_seeds) {
      for (size_t i = 0; i < samples.size(); ++i) {
        DefenseConfig d;
        d.sigma = row.sigma;
        d.seed = Rng::derive(seed, "acc") + i;
        const auto z = sm.f1(samples[i].model);
        splitnet::FeatureTensor ft{z, sm.split_index()};
        const auto noisy = perturb_features(ft, d);
        const Tensor logits = sm.f2(noisy.values);
        int argmax = 0;
        for (long c = 1; c < logits.size(); ++c)
          if (logits[c] > logits[argmax]) argmax = static_cast<int>(c);
        correct += (argmax == samples[i].label) ? 1.0 : 0.0;
        total += 1.0;
      }
    }
    row.task_accuracy = correct / total;

    // privacy: attack quality against the noisy features
    try {
      double psnr_sum = 0.0, ssim_sum = 0.0;
      for (int i = 0; i < n_attack; ++i) {
        DefenseConfig d;
        d.sigma = row.sigma;
        d.seed = opts.noise_seed + static_cast<std::uint64_t>(i);
        const auto z = sm.f1(samples[static_cast<size_t>(i)].model);
        splitnet::FeatureTensor ft{z, sm.split_index()};
        const auto noisy = perturb_features(ft, d);
        const Tensor recon = attack(sm, noisy);
        const Tensor a =
            metrics::to_255(samples[static_cast<size_t>(i)].pixels);
        const Tensor b = metrics::to_255(data::to_pixels(recon, pre));
        psnr_sum += metrics::psnr(a, b);
        ssim_sum += metrics::ssim(a, b);
      }
      row.mean_psnr = psnr_sum / n_attack;
      row.mean_ssim = ssim_sum / n_attack;
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string tradeoff_csv(const std::vector<TradeoffRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "sigma,task_accuracy,attack_psnr,attack_ssim,status\n";
  for (const auto& r : rows)
    os << r.sigma << "," << r.task_accuracy << "," << r.mean_psnr << ","
       << r.mean_ssim << ",\"" << r.status << "\"\n";
  return os.str();
}

}  // namespace featinv::defense
