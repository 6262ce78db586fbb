/*
 * Copyright 2026 The palsylm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace palsylm {

/// Base of every error raised by the library. Callers that only need to
/// distinguish "our" failures from programming errors catch this.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DegenerateShape : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class DecodeError : public Error { public: using Error::Error; };
class InsufficientSubjects : public Error { public: using Error::Error; };
class EmptyDataset : public Error { public: using Error::Error; };
class MissingGroundTruth : public Error { public: using Error::Error; };
class InvalidParams : public Error { public: using Error::Error; };
class InvalidBox : public Error { public: using Error::Error; };
class ModelFormatError : public Error { public: using Error::Error; };
class DegenerateData : public Error { public: using Error::Error; };
class PairingError : public Error { public: using Error::Error; };
class NotFound : public Error { public: using Error::Error; };
class TrainingDiverged : public Error { public: using Error::Error; };

/// Parse failure; carries the 1-based line number where it was detected
/// (0 when the failure is not tied to a line).
class ParseError : public Error
{
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line)
    {
    }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Rejected user input. `indices` lists offending landmark indices, if any.
class ValidationError : public Error
{
public:
    ValidationError(const std::string& what, std::vector<int> indices = {})
        : Error(what), indices_(std::move(indices))
    {
    }
    const std::vector<int>& indices() const noexcept { return indices_; }

private:
    std::vector<int> indices_;
};

} // namespace palsylm
