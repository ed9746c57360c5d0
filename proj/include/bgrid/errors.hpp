#pragma once

#include <stdexcept>
#include <string>

namespace bgrid {

enum class IoErrc {
    NotFound,
    MalformedHeader,
    Truncated,
    UnsupportedDtype,
    UnsupportedFormat,
    UnsupportedBitDepth,
    RaggedRow,
    BadNumber,
    WriteFailed,
};

class IoError : public std::runtime_error {
public:
    IoError(IoErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    IoErrc code() const { return code_; }

private:
    IoErrc code_;
};

// Guidance with zero dynamic range cannot define a range coordinate.
class DegenerateGuidanceError : public std::domain_error {
public:
    explicit DegenerateGuidanceError(const std::string& what)
        : std::domain_error(what) {}
};

}  // namespace bgrid
