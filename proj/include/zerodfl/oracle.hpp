#pragma once

// Grants read access to generation-only scenario state (the hidden contexts).
// Only oracle checks and tests include this header.

namespace zerodfl {

class OracleKey {
public:
    OracleKey(const OracleKey&) = default;

private:
    OracleKey() = default;
    friend OracleKey grant_oracle_access();
};

inline OracleKey grant_oracle_access() { return OracleKey{}; }

}  // namespace zerodfl
