#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace protoscope {

// Caller broke a documented precondition (dimension mismatch, bad label, ...).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Training produced a non-finite loss.
class DivergedTraining : public std::runtime_error {
public:
    DivergedTraining(const std::string& what, int epoch)
        : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Malformed input file; carries the byte offset where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::uint64_t byte_offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(byte_offset)),
          byte_offset_(byte_offset) {}
    std::uint64_t byte_offset() const { return byte_offset_; }

private:
    std::uint64_t byte_offset_;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace protoscope
