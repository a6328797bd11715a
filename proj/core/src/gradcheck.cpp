#include "msw/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "msw/errors.hpp"
#include "msw/train.hpp"

namespace msw {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

GradAudit gradient_audit(const MswConfig& cfg, const ParamStore& params,
                         std::span<const EcgRecord* const> records, double step, bool train,
                         std::uint64_t dropout_seed) {
  cfg.validate();
  check_params(cfg, params);
  if (records.empty()) throw DataError("gradient audit needs at least one record");
  if (!(step > 0.0)) throw AdmissibilityError("finite-difference step must be positive");

  const Tensor labels = label_tensor(records, cfg.classes);
  auto loss_of = [&](const ParamStore& p) {
    Rng rng(dropout_seed);
    return bce_loss(forward(records, cfg, p, train, rng).probs, labels);
  };

  ParamStore work = params.clone();
  {
    Tensor loss = loss_of(work);
    backward(loss);
  }

  GradAudit audit;
  for (const auto& [name, handle] : work) {
    Tensor tensor = handle;
    ParamGradError entry;
    entry.name = name;
    entry.size = tensor.numel();
    std::vector<double> analytic(entry.size, 0.0);
    if (tensor.has_grad()) std::ranges::copy(tensor.grad(), analytic.begin());
    auto values = tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard no_grad;
        values[i] = saved + step;
        plus = loss_of(work).item();
        values[i] = saved - step;
        minus = loss_of(work).item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], numeric));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic[i] - numeric));
    }
    audit.checked += entry.size;
    if (entry.max_rel_error >= audit.max_rel_error) {
      audit.max_rel_error = entry.max_rel_error;
      audit.worst = name;
    }
    audit.params.push_back(std::move(entry));
  }
  return audit;
}

GradAudit gradient_audit(const MswConfig& cfg, std::uint64_t seed, std::size_t records,
                         double step) {
  cfg.validate();
  Rng rng(seed);
  ParamStore params = init_params(cfg, rng);
  std::normal_distribution<double> perturb(0.0, 0.1);
  for (const auto& [name, handle] : params) {
    Tensor tensor = handle;
    for (auto& v : tensor.mutable_data()) v += perturb(rng);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<EcgRecord> recs(records);
  for (std::size_t r = 0; r < records; ++r) {
    recs[r].id = "audit-" + std::to_string(r);
    recs[r].signal.resize(cfg.n_leads * cfg.seq_len);
    for (auto& v : recs[r].signal) v = normal(rng);
    recs[r].labels.resize(cfg.classes);
    for (auto& l : recs[r].labels) l = coin(rng) ? 1 : 0;
  }
  std::vector<const EcgRecord*> ptrs;
  for (const auto& r : recs) ptrs.push_back(&r);
  return gradient_audit(cfg, params, ptrs, step, true, seed ^ 0xd1b54a32d192ed03ULL);
}

}  // namespace msw
