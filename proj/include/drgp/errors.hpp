#ifndef DRGP_ERRORS_HPP
#define DRGP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace drgp {

// Base class for every error raised by the library. kind() is the stable
// error name surfaced by the command-line tool.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char *kind() const noexcept { return "Error"; }
};

#define DRGP_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                \
  public:                                                                    \
    using Error::Error;                                                      \
    const char *kind() const noexcept override { return #Name; }             \
  }

DRGP_DEFINE_ERROR(InvalidArgument);
DRGP_DEFINE_ERROR(DimensionMismatch);
DRGP_DEFINE_ERROR(NotFactorizable);
DRGP_DEFINE_ERROR(NonFiniteObjective);
DRGP_DEFINE_ERROR(ZeroVariance);
DRGP_DEFINE_ERROR(TooFewUnits);
DRGP_DEFINE_ERROR(DegenerateTargets);
DRGP_DEFINE_ERROR(NegativeValue);
DRGP_DEFINE_ERROR(MissingTaggedColumn);
DRGP_DEFINE_ERROR(DegenerateWeights);
DRGP_DEFINE_ERROR(MisorderedInterval);
DRGP_DEFINE_ERROR(SingularDesign);
DRGP_DEFINE_ERROR(MissingColumn);
DRGP_DEFINE_ERROR(NonNumericCell);
DRGP_DEFINE_ERROR(EmptyFile);
DRGP_DEFINE_ERROR(InternalConsistency);

#undef DRGP_DEFINE_ERROR

inline void require_same_size(std::size_t a, std::size_t b, const char *what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

} // namespace drgp

#endif // DRGP_ERRORS_HPP
