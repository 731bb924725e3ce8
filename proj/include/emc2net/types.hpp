/*
 * Copyright 2026 The emc2net Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace emc2net {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatXd = Mat<double>;
using MatXf = Mat<float>;
using VecXd = Vec<double>;
using VecXf = Vec<float>;

using cplx = std::complex<double>;
using CVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;

/// Base error for all library failures.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or argument contract violation.
struct ShapeError : Error {
  using Error::Error;
};

/// Non-finite value produced by a numeric operation.
struct NumericError : Error {
  using Error::Error;
};

/// Malformed file contents (bad magic, version, truncation).
struct FormatError : Error {
  using Error::Error;
};

/// Filesystem failure (open/read/write).
struct IoError : Error {
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// A required earlier artifact (e.g. phase checkpoint) is missing.
struct PrereqError : Error {
  using Error::Error;
};

/// Adaptive algorithm left its stability region.
struct DivergenceError : Error {
  long iteration;
  DivergenceError(const std::string& msg, long it) : Error(msg), iteration(it) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace emc2net
