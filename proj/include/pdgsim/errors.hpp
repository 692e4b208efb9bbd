#pragma once

#include <stdexcept>
#include <string>

namespace pdgsim {

// Root of every error the library throws. Carries a short machine-friendly
// category name next to the human-readable message.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(category + ": " + message),
        category_(std::move(category)),
        message_(message) {}

  const std::string& category() const noexcept { return category_; }
  // The message without the category prefix.
  const std::string& message() const noexcept { return message_; }

private:
  std::string category_;
  std::string message_;
};

class LexError : public Error {
public:
  LexError(int line, const std::string& message)
      : Error("LexError", "line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

class ParseError : public Error {
public:
  ParseError(int line, const std::string& expected, const std::string& found)
      : Error("ParseError",
              "line " + std::to_string(line) + ": expected " + expected + ", found " + found),
        line_(line), expected_(expected), found_(found) {}
  int line() const noexcept { return line_; }
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

private:
  int line_;
  std::string expected_;
  std::string found_;
};

#define PDGSIM_DEFINE_ERROR(Name)                                                    \
  class Name : public Error {                                                        \
  public:                                                                            \
    explicit Name(const std::string& message) : Error(#Name, message) {}             \
  };

PDGSIM_DEFINE_ERROR(LowerError)
PDGSIM_DEFINE_ERROR(UnreachableExit)
PDGSIM_DEFINE_ERROR(FormatError)
PDGSIM_DEFINE_ERROR(ShapeError)
PDGSIM_DEFINE_ERROR(MaskError)
PDGSIM_DEFINE_ERROR(NotScalar)
PDGSIM_DEFINE_ERROR(EmptyGraph)
PDGSIM_DEFINE_ERROR(LengthMismatch)
PDGSIM_DEFINE_ERROR(EmptyDataset)
PDGSIM_DEFINE_ERROR(SingleClass)
PDGSIM_DEFINE_ERROR(NotApplicable)
PDGSIM_DEFINE_ERROR(InsufficientSeeds)
PDGSIM_DEFINE_ERROR(ConfigError)
PDGSIM_DEFINE_ERROR(IoError)

#undef PDGSIM_DEFINE_ERROR

}  // namespace pdgsim
