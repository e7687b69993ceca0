#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ognn {

/// Dense row-major matrix. Row-major because node embeddings are rows and
/// graph aggregation gathers rows.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matd = Mat<double>;
using Matf = Mat<float>;
using Index = Eigen::Index;

// Error taxonomy. CLI maps ConfigError/IngestError to exit code 1,
// everything else to 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
struct DimensionError : Error {
  using Error::Error;
};

/// Non-finite or out-of-domain numeric input.
struct NumericError : Error {
  using Error::Error;
};

/// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed or inconsistent input file.
struct IngestError : Error {
  using Error::Error;
};

/// Caller violated an API precondition.
struct ContractError : Error {
  using Error::Error;
};

/// Object used in an invalid lifecycle state.
struct StateError : Error {
  using Error::Error;
};

inline std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

template <class T>
std::string shape_str(const Mat<T>& m) {
  return shape_str(m.rows(), m.cols());
}

}  // namespace ognn
