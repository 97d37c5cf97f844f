#pragma once

#include <stdexcept>
#include <string>

namespace subcluster {

// Error taxonomy shared by all modules. Everything derives from
// std::runtime_error so callers can catch coarsely at the CLI boundary.

class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

class ParameterError : public std::runtime_error {
public:
    explicit ParameterError(const std::string& what) : std::runtime_error(what) {}
};

class LabelError : public std::runtime_error {
public:
    explicit LabelError(const std::string& what) : std::runtime_error(what) {}
};

class DegenerateInputError : public std::runtime_error {
public:
    explicit DegenerateInputError(const std::string& what) : std::runtime_error(what) {}
};

class EmptyInputError : public std::runtime_error {
public:
    explicit EmptyInputError(const std::string& what) : std::runtime_error(what) {}
};

class GeneratorError : public std::runtime_error {
public:
    explicit GeneratorError(const std::string& what) : std::runtime_error(what) {}
};

// Carries the 1-based line where a feature file stopped making sense.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Raised when a training step produces a non-finite loss or parameter.
class TrainingDivergenceError : public std::runtime_error {
public:
    TrainingDivergenceError(const std::string& what, std::size_t batch_index)
        : std::runtime_error(what + " (batch " + std::to_string(batch_index) + ")"),
          batch_index_(batch_index) {}
    std::size_t batch_index() const { return batch_index_; }

private:
    std::size_t batch_index_;
};

}  // namespace subcluster
