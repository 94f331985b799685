#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace transpotter {

// Shape mismatch between tensors or against an operation's contract.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

// Malformed text input (lexicon, manifest); carries the 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_no)
      : std::runtime_error("parse: line " + std::to_string(line_no) + ": " + msg),
        line(line_no) {}
  std::size_t line;
};

// Malformed binary input; carries the byte offset where reading failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error("format: byte " + std::to_string(byte_offset) + ": " + msg),
        offset(byte_offset) {}
  std::size_t offset;
};

// Word has no pronunciation in the lexicon.
struct NotInLexicon : std::runtime_error {
  explicit NotInLexicon(const std::string& word)
      : std::runtime_error("not in lexicon: " + word), word(word) {}
  std::string word;
};

// Structurally valid input that violates a semantic invariant (e.g. overlapping spans).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error("validation: " + msg) {}
};

// An output was requested that the configured model variant does not produce.
struct CapabilityError : std::runtime_error {
  explicit CapabilityError(const std::string& msg) : std::runtime_error("capability: " + msg) {}
};

// Inconsistent or unknown run configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

}  // namespace transpotter
