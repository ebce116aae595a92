#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmde {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define LMDE_DEFINE_ERROR(Name)              \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

LMDE_DEFINE_ERROR(ShapeError);
LMDE_DEFINE_ERROR(RangeError);
LMDE_DEFINE_ERROR(NumericError);
LMDE_DEFINE_ERROR(ConfigError);
LMDE_DEFINE_ERROR(StateError);
LMDE_DEFINE_ERROR(VocabError);
LMDE_DEFINE_ERROR(WeightLoadError);
LMDE_DEFINE_ERROR(SplitError);
LMDE_DEFINE_ERROR(LossError);
LMDE_DEFINE_ERROR(MetricsError);
LMDE_DEFINE_ERROR(IoError);
LMDE_DEFINE_ERROR(ReportError);

#undef LMDE_DEFINE_ERROR

/// Raised while reading dataset files. Carries the 1-based index line when the
/// failure is tied to one.
class IngestError : public Error {
public:
    explicit IngestError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Raised when training diverges.
class TrainError : public Error {
public:
    TrainError(const std::string& what, long step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace lmde
