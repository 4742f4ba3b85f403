#pragma once

#include <stdexcept>
#include <string>

namespace ftriage {

// Every failure surfaced by the library derives from Error so callers (the
// CLI in particular) can catch one type and still report the category.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* category() const noexcept { return "error"; }
};

#define FTRIAGE_ERROR_KIND(Name, tag)                                      \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(what) {}            \
        const char* category() const noexcept override { return tag; }    \
    };

FTRIAGE_ERROR_KIND(ConfigError, "configuration error")
FTRIAGE_ERROR_KIND(NumericError, "numeric error")
FTRIAGE_ERROR_KIND(UsageError, "usage error")
FTRIAGE_ERROR_KIND(InputError, "input error")
FTRIAGE_ERROR_KIND(FormatError, "format error")
FTRIAGE_ERROR_KIND(CapabilityError, "capability error")

#undef FTRIAGE_ERROR_KIND

/// Call from inside a catch block: rethrows the active ftriage error as the
/// same kind with `prefix` prepended to its message. Foreign exceptions pass
/// through unchanged.
[[noreturn]] inline void rethrow_with_context(const std::string& prefix) {
    try {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const UsageError& e) {
        throw UsageError(prefix + e.what());
    } catch (const InputError& e) {
        throw InputError(prefix + e.what());
    } catch (const FormatError& e) {
        throw FormatError(prefix + e.what());
    } catch (const CapabilityError& e) {
        throw CapabilityError(prefix + e.what());
    } catch (const Error& e) {
        throw Error(prefix + e.what());
    }
}

} // namespace ftriage
