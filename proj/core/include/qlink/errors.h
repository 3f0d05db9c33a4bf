// Copyright 2026 The qlink Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QLINK_ERRORS_H
#define QLINK_ERRORS_H

#include <stdexcept>
#include <string>

namespace qlink {

class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ParameterArityError : public Error {
   public:
    using Error::Error;
};

class CompositionError : public Error {
   public:
    using Error::Error;
};

class RoutingError : public Error {
   public:
    using Error::Error;
};

class CircuitError : public Error {
   public:
    using Error::Error;
};

class ParseError : public Error {
   public:
    using Error::Error;
};

class CapacityError : public Error {
   public:
    using Error::Error;
};

class QpdError : public Error {
   public:
    using Error::Error;
};

class ConvergenceError : public Error {
   public:
    ConvergenceError(const std::string &what, double best_residual)
        : Error(what), best_residual(best_residual) {
    }
    double best_residual;
};

class MitigationError : public Error {
   public:
    using Error::Error;
};

class GraphError : public Error {
   public:
    using Error::Error;
};

class ConfigError : public Error {
   public:
    using Error::Error;
};

class PartitionError : public Error {
   public:
    using Error::Error;
};

class LinkError : public Error {
   public:
    using Error::Error;
};

class HandshakeError : public LinkError {
   public:
    using LinkError::LinkError;
};

class ProtocolError : public LinkError {
   public:
    using LinkError::LinkError;
};

}  // namespace qlink

#endif
