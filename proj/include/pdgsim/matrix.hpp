#pragma once

#include <Eigen/Dense>

namespace pdgsim {

// Dense double-precision matrix used by every numeric module.
using Matrix = Eigen::MatrixXd;

}  // namespace pdgsim
