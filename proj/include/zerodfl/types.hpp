#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace zerodfl {

struct ClientId {
    std::size_t value = 0;

    friend auto operator<=>(const ClientId&, const ClientId&) = default;
};

using ClassId = std::int32_t;

/// One learnable context vector of length d.
using PromptVector = Eigen::VectorXd;

/// M prompt vectors, stored column-wise (d x M), each with the client it came
/// from. Column-major storage makes `flattened()` the concatenation
/// [v_1, ..., v_M] that the text encoder consumes.
class PromptSet {
public:
    PromptSet() = default;
    PromptSet(Eigen::MatrixXd values, std::vector<ClientId> sources);
    /// All slots owned by `owner`.
    PromptSet(Eigen::MatrixXd values, ClientId owner);

    std::size_t size() const { return static_cast<std::size_t>(values_.cols()); }
    std::size_t dim() const { return static_cast<std::size_t>(values_.rows()); }

    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::MatrixXd& mutable_values() { return values_; }

    auto slot(std::size_t m) const { return values_.col(static_cast<Eigen::Index>(m)); }
    ClientId source(std::size_t m) const { return sources_.at(m); }
    const std::vector<ClientId>& sources() const { return sources_; }

    void set_slot(std::size_t m, const PromptVector& value, ClientId source);

    Eigen::Map<const Eigen::VectorXd> flattened() const {
        return {values_.data(), values_.size()};
    }

    bool all_finite() const { return values_.allFinite(); }

    friend bool operator==(const PromptSet& a, const PromptSet& b) {
        return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
               a.values_ == b.values_ && a.sources_ == b.sources_;
    }

private:
    Eigen::MatrixXd values_;
    std::vector<ClientId> sources_;
};

struct Sample {
    Eigen::VectorXd features;
    ClassId label = 0;
};

struct ClientDataset {
    std::vector<ClassId> classes;
    std::vector<Sample> samples;
    int domain = 0;
};

/// F_{i,j}: how often this client picked each peer as a recipient.
class SelectionHistory {
public:
    SelectionHistory() = default;
    SelectionHistory(ClientId self, std::size_t num_clients);

    const std::map<ClientId, std::uint64_t>& counts() const { return counts_; }
    std::uint64_t count(ClientId peer) const { return counts_.at(peer); }
    std::size_t num_peers() const { return counts_.size(); }

    void record(ClientId peer);

    /// Test and replay helper; counts may only grow.
    void set_count(ClientId peer, std::uint64_t value);

private:
    std::map<ClientId, std::uint64_t> counts_;
};

struct PoolEntry {
    PromptVector values;
    ClientId source;
    int received_round = 0;
    /// Slot index the sender shared this prompt from.
    int slot = 0;
};

/// Prompts received from peers. Entries are append-only and never edited in
/// place; `prune` drops whole entries that fell out of the retention window.
class PromptPool {
public:
    const std::vector<PoolEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    void add(PoolEntry entry) { entries_.push_back(std::move(entry)); }

    /// Keeps entries with received_round >= current_round - retention_rounds.
    void prune(int current_round, int retention_rounds);

private:
    std::vector<PoolEntry> entries_;
};

struct ClientState {
    ClientId id;
    ClientDataset dataset;
    PromptSet active_prompts;
    PromptPool pool;
    SelectionHistory selection_counts;
    std::uint64_t received_total = 0;
};

/// FNV-1a over the raw bytes of the inputs; used to prove state was not
/// mutated.
class Fingerprint {
public:
    void add_bytes(const void* data, std::size_t size);
    void add(double x) { add_bytes(&x, sizeof x); }
    void add(std::uint64_t x) { add_bytes(&x, sizeof x); }
    void add(const Eigen::MatrixXd& m);
    void add(const Eigen::VectorXd& v);
    std::uint64_t value() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fingerprint(const ClientState& client);

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace zerodfl
