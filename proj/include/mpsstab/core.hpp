#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mpsstab {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

// Relative cutoff for every rank and kernel decision in the library.
inline constexpr double kRankTol = 1e-10;
// Largest dimension handed to the dense Hermitian eigensolver in automatic mode.
inline constexpr std::size_t kDenseLimit = 4096;
// Largest d^L for which products of site matrices are enumerated.
inline constexpr std::size_t kEnumerationCap = 4096;
// Largest Hilbert space dimension for state vectors and ring Hamiltonians.
inline constexpr std::size_t kStateCap = std::size_t{1} << 20;
// Eigenvalues within this distance of the minimum count as ground states.
inline constexpr double kDegeneracyTol = 1e-8;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapExceeded : public Error {
 public:
  using Error::Error;
};

class NotGeneric : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

inline std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap,
                               const char* what) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (r > cap / base)
      throw CapExceeded(std::string(what) + ": " + std::to_string(base) + "^" +
                        std::to_string(exp) + " exceeds cap " + std::to_string(cap));
    r *= base;
  }
  if (r > cap)
    throw CapExceeded(std::string(what) + ": dimension exceeds cap " + std::to_string(cap));
  return r;
}

inline std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace mpsstab
