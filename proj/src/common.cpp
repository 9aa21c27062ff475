#include "shrinkcl/common.hpp"

#include <cstdio>

namespace shrinkcl {

void ensure_finite(const Eigen::Ref<const Matrix>& m, const std::string& what) {
  if (!m.allFinite()) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (!std::isfinite(m(i, j))) {
          fail(what + ": non-finite value at (" + std::to_string(i) + ", " +
               std::to_string(j) + ")");
        }
      }
    }
  }
}

void warn(const std::string& msg) {
  std::fprintf(stderr, "[shrinkcl] warning: %s\n", msg.c_str());
}

Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  ensure(a.cols() == b.rows(),
         "matmul: inner dimensions differ (" + std::to_string(a.rows()) + "x" +
             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
             std::to_string(b.cols()) + ")");
  return a * b;
}

Matrix row_softmax(const Eigen::Ref<const Matrix>& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace shrinkcl
