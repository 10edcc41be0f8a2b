#ifndef DNOC_ERRORS_HPP
#define DNOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dnoc {

// Every error carries the name of the module that raised it; what() renders
// as "[module] message".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define DNOC_DEFINE_ERROR(Name)                                         \
  class Name : public Error {                                           \
   public:                                                              \
    Name(std::string module, const std::string& message)                \
        : Error(std::move(module), message) {}                          \
  };

DNOC_DEFINE_ERROR(ShapeError)
DNOC_DEFINE_ERROR(DomainError)
DNOC_DEFINE_ERROR(IndexError)
DNOC_DEFINE_ERROR(NumericError)
DNOC_DEFINE_ERROR(CapacityError)
DNOC_DEFINE_ERROR(EmptyMemoryError)
DNOC_DEFINE_ERROR(ParseError)
DNOC_DEFINE_ERROR(SchemaError)
DNOC_DEFINE_ERROR(CoverageError)
DNOC_DEFINE_ERROR(CheckpointError)
DNOC_DEFINE_ERROR(IoError)
DNOC_DEFINE_ERROR(ConfigError)

#undef DNOC_DEFINE_ERROR

}  // namespace dnoc

#endif  // DNOC_ERRORS_HPP
