// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace bhm {

// Error taxonomy shared by the C++ core and the C API status codes.
// Every throwing code path in the library raises bhm::Error with one of
// these categories; nothing else escapes the public entry points.
enum class errc {
  argument,          // caller passed a malformed argument (bad id, bad range, null)
  format,            // input file or JSON payload does not parse / wrong schema
  data,              // parsed fine but content violates an invariant (e.g. time not increasing)
  coverage,          // requested interval / window not covered by the signal
  degenerate,        // computation defined but input is degenerate (zero variance, flat curve)
  insufficient,      // not enough samples / cycles for the computation
  undefined_entropy, // sample entropy has no matches at the template or extended length
  numerical,         // linear algebra failure (singular system with ridge 0, non-finite result)
  conversion,        // descriptor cannot be converted to its SOC-based form
  evaluation,        // every cell degenerate / nothing evaluable
  search,            // grid search found no candidate with a defined score
  config,            // pipeline configuration invalid or inconsistent
  io,                // filesystem failure
  internal           // bug guard; should not surface in normal operation
};

const char* errc_name(errc c) noexcept;

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw Error(code, what); }

} // namespace bhm
