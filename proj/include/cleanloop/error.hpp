/*
 * Copyright 2026 The cleanloop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CLEANLOOP_ERROR_HPP_
#define CLEANLOOP_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cleanloop {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what
                        : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Failure reported by an external annotator callback.
class AnnotatorError : public Error {
 public:
  using Error::Error;
};

}  // namespace cleanloop

#endif  // CLEANLOOP_ERROR_HPP_
