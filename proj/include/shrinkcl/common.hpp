#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace shrinkcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Error type thrown by every validating operation in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void ensure(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

/// Throws if any entry of `m` is NaN or infinite.
void ensure_finite(const Eigen::Ref<const Matrix>& m, const std::string& what);

/// Prints a warning line to stderr.
void warn(const std::string& msg);

/// Validated matrix product (dimension mismatch throws instead of the
/// assertion Eigen would raise).
Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// Row-wise softmax with max-subtraction; rows sum to one.
Matrix row_softmax(const Eigen::Ref<const Matrix>& logits);

}  // namespace shrinkcl
