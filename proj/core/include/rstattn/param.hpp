#ifndef RSTATTN_PARAM_HPP
#define RSTATTN_PARAM_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace rstattn {

/// Named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Parameter() = default;
  Parameter(std::string name, int rows, int cols)
      : name(std::move(name)),
        value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParameterRefs = std::vector<Parameter*>;

}  // namespace rstattn

#endif
