#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "exprtree/params.hpp"
#include "exprtree/tensor.hpp"

namespace exprtree {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
};

// Central finite differences against the tape gradient. loss_fn builds the
// loss on the given tape; with a null tape it must run value-only (the store
// is unbound then, so use() hands out untracked tensors). Relative error is
// |fd - ad| / max(1, |fd|, |ad|). Samples `samples_per_param` entries of each
// parameter (all entries when the parameter is smaller than that).
GradCheckReport grad_check(ParamStore& store,
                           const std::function<Tensor(Tape*)>& loss_fn,
                           int samples_per_param = 4, double eps = 1e-5,
                           uint64_t seed = 1234);

}  // namespace exprtree
