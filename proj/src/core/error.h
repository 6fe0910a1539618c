#pragma once

#include <stdexcept>
#include <string>

namespace rssl {

  // Coarse failure classes. The C API maps these onto status codes and the CLI
  // onto process exit codes (usage = 1, data = 2, numeric = 3).
  enum class ErrorKind {
    Usage,
    Config,
    Io,
    Data,
    Numeric,
    Internal,
  };

  class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message)
      , _kind(kind)
      , _code(std::move(code)) {
    }

    ErrorKind kind() const {
      return _kind;
    }

    // Short machine-readable tag such as "SilentInput" or "EmptyManifest".
    const std::string& code() const {
      return _code;
    }

  private:
    ErrorKind _kind;
    std::string _code;
  };

  [[noreturn]] inline void fail(ErrorKind kind, const std::string& code, const std::string& message) {
    throw Error(kind, code, message);
  }

}
