#pragma once

#include <stdexcept>
#include <string>

namespace hmmqp {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A model or vector failed a construction invariant.
struct InvalidModel : Error {
  using Error::Error;
};

/// The eigenvalue 1 of the transition matrix is not simple.
struct NonUniqueStationary : Error {
  using Error::Error;
};

struct SymbolOutOfRange : Error {
  using Error::Error;
};

struct SequenceTooShort : Error {
  using Error::Error;
};

struct QuadratureNotConverged : Error {
  using Error::Error;
};

/// QP feasible set is empty (phase-1 residual above tolerance).
struct Infeasible : Error {
  using Error::Error;
};

struct MaxIterationsExceeded : Error {
  using Error::Error;
};

struct SingularMatrix : Error {
  using Error::Error;
};

/// Perturbation bound requested with epsilon >= lambda_min.
struct BoundInapplicable : Error {
  using Error::Error;
};

/// Emission / kernel matrix does not have full column rank.
struct RankDeficient : Error {
  using Error::Error;
};

/// Every EM restart collapsed a component onto the variance floor.
struct DegenerateComponent : Error {
  using Error::Error;
};

struct NumericalUnderflow : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

}  // namespace hmmqp
