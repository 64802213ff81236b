#include "exprtree/gradcheck.hpp"

#include <cmath>
#include <random>

#include "exprtree/errors.hpp"

namespace exprtree {

GradCheckReport grad_check(ParamStore& store,
                           const std::function<Tensor(Tape*)>& loss_fn,
                           int samples_per_param, double eps, uint64_t seed) {
  store.zero_grads();
  {
    Tape tape;
    store.bind(tape);
    Tensor loss = loss_fn(&tape);
    tape.backward(loss);
    store.collect_grads();
    store.unbind();
  }

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (int p = 0; p < store.count(); ++p) {
    auto& values = store.value(p);
    const auto& grads = store.grad(p);
    int n = static_cast<int>(values.size());
    int samples = samples_per_param >= n ? n : samples_per_param;
    for (int s = 0; s < samples; ++s) {
      int idx;
      if (samples == n) {
        idx = s;
      } else {
        idx = static_cast<int>(rng() % static_cast<uint64_t>(n));
      }
      double old = values[idx];
      values[idx] = old + eps;
      double up = loss_fn(nullptr).value();
      values[idx] = old - eps;
      double down = loss_fn(nullptr).value();
      values[idx] = old;
      double fd = (up - down) / (2.0 * eps);
      double ad = grads[idx];
      double rel = std::fabs(fd - ad) /
                   std::max({1.0, std::fabs(fd), std::fabs(ad)});
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = store.name(p);
      }
    }
  }
  return report;
}

}  // namespace exprtree
