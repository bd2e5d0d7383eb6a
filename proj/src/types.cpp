#include "zerodfl/types.hpp"

#include <algorithm>
#include <string>

namespace zerodfl {

PromptSet::PromptSet(Eigen::MatrixXd values, std::vector<ClientId> sources)
    : values_(std::move(values)), sources_(std::move(sources)) {
    if (sources_.size() != static_cast<std::size_t>(values_.cols())) {
        throw std::invalid_argument("PromptSet: one source per prompt slot required");
    }
}

PromptSet::PromptSet(Eigen::MatrixXd values, ClientId owner)
    : values_(std::move(values)), sources_(static_cast<std::size_t>(values_.cols()), owner) {}

void PromptSet::set_slot(std::size_t m, const PromptVector& value, ClientId source) {
    if (m >= size()) throw std::out_of_range("PromptSet: slot " + std::to_string(m));
    if (static_cast<std::size_t>(value.size()) != dim()) {
        throw std::invalid_argument("PromptSet: expected a vector of length " + std::to_string(dim()) +
                                    ", got " + std::to_string(value.size()));
    }
    values_.col(static_cast<Eigen::Index>(m)) = value;
    sources_[m] = source;
}

SelectionHistory::SelectionHistory(ClientId self, std::size_t num_clients) {
    for (std::size_t j = 0; j < num_clients; ++j) {
        if (j != self.value) counts_.emplace(ClientId{j}, 0);
    }
}

void SelectionHistory::record(ClientId peer) {
    auto it = counts_.find(peer);
    if (it == counts_.end()) throw std::out_of_range("SelectionHistory: not a peer");
    ++it->second;
}

void SelectionHistory::set_count(ClientId peer, std::uint64_t value) {
    auto it = counts_.find(peer);
    if (it == counts_.end()) throw std::out_of_range("SelectionHistory: not a peer");
    if (value < it->second) throw std::invalid_argument("SelectionHistory: counts never decrease");
    it->second = value;
}

void PromptPool::prune(int current_round, int retention_rounds) {
    const int oldest = current_round - retention_rounds;
    std::erase_if(entries_, [oldest](const PoolEntry& e) { return e.received_round < oldest; });
}

void Fingerprint::add_bytes(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash_ ^= bytes[i];
        hash_ *= 0x100000001b3ULL;
    }
}

void Fingerprint::add(const Eigen::MatrixXd& m) {
    add(static_cast<std::uint64_t>(m.rows()));
    add(static_cast<std::uint64_t>(m.cols()));
    add_bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void Fingerprint::add(const Eigen::VectorXd& v) {
    add(static_cast<std::uint64_t>(v.size()));
    add_bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

std::uint64_t fingerprint(const ClientState& client) {
    Fingerprint fp;
    fp.add(static_cast<std::uint64_t>(client.id.value));
    fp.add(client.active_prompts.values());
    for (const auto& s : client.active_prompts.sources()) fp.add(static_cast<std::uint64_t>(s.value));
    for (const auto& [peer, count] : client.selection_counts.counts()) {
        fp.add(static_cast<std::uint64_t>(peer.value));
        fp.add(count);
    }
    for (const auto& e : client.pool.entries()) {
        fp.add(e.values);
        fp.add(static_cast<std::uint64_t>(e.source.value));
        fp.add(static_cast<std::uint64_t>(e.received_round));
        fp.add(static_cast<std::uint64_t>(e.slot));
    }
    for (const auto& s : client.dataset.samples) {
        fp.add(s.features);
        fp.add(static_cast<std::uint64_t>(s.label));
    }
    fp.add(client.received_total);
    return fp.value();
}

}  // namespace zerodfl
