#pragma once

#include <chrono>
#include <thread>

#include "cpretrieve/error.hpp"

namespace cpretrieve {

/// Bounded retry with exponential backoff for provider transport failures.
struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

/// Runs fn, retrying on ProviderError. The error that escapes reports the
/// total number of attempts made. Other exceptions pass through untouched.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    const int attempts = policy.attempts < 1 ? 1 : policy.attempts;
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (attempt >= attempts) {
                // strip the inner "(after 1 attempt)" suffix
                std::string message = e.what();
                if (const auto pos = message.rfind(" (after "); pos != std::string::npos) {
                    message.erase(pos);
                }
                throw ProviderError(message, attempt);
            }
        }
        if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
}

}  // namespace cpretrieve
