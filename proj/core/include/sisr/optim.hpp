#pragma once

#include <vector>

#include "sisr/params.hpp"

namespace sisr::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescales the global gradient norm down to this value; 0 disables.
  double clip_norm = 1.0;
};

// Adaptive moment estimation over a ParameterSet. Parameters without an
// accumulated gradient are skipped for that step.
class Adam {
 public:
  Adam(nn::ParameterSet params, AdamConfig config);

  void step();
  void zero_grad() { params_.zero_grad(); }
  long steps() const { return t_; }

 private:
  nn::ParameterSet params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace sisr::optim
