#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geomq/geometry.hpp"
#include "geomq/raster.hpp"
#include "geomq/topic.hpp"

namespace geomq {

/// Topic tree plus per-node spatial index plus client location registry.
/// Matching runs three checks in a fixed order: topic filter match, then the
/// consumer fence must contain the publisher location, then the producer
/// fence must contain the consumer location. A subscription or publish
/// without a fence passes its own geo check unconditionally.
///
/// Thread-safe: matching and lookups take a shared lock, mutations take an
/// exclusive lock.
class SubscriptionStore {
public:
    explicit SubscriptionStore(int granularity, bool finalIntersectionCheck = true)
        : granularity_(granularity),
          finalIntersectionCheck_(finalIntersectionCheck),
          root_(granularity, finalIntersectionCheck) {}

    int granularity() const { return granularity_; }

    void updateLocation(const std::string& clientId, const Location& loc) {
        std::unique_lock lock(mu_);
        locations_[clientId] = loc;
    }

    std::optional<Location> locationOf(const std::string& clientId) const {
        std::shared_lock lock(mu_);
        auto it = locations_.find(clientId);
        if (it == locations_.end()) return std::nullopt;
        return it->second;
    }

    bool hasLocation(const std::string& clientId) const {
        std::shared_lock lock(mu_);
        return locations_.count(clientId) > 0;
    }

    /// Insert or replace the (client, filter) subscription. An absent fence
    /// subscribes everywhere; such subscriptions live on the tree node itself
    /// instead of its raster.
    void subscribe(const std::string& clientId, const TopicFilter& filter,
                   std::optional<Geofence> fence) {
        std::unique_lock lock(mu_);
        Node* node = &root_;
        for (const auto& level : filter.levels()) {
            auto& child = node->children[level];
            if (!child) child = std::make_unique<Node>(granularity_, finalIntersectionCheck_);
            node = child.get();
        }
        const SubscriptionRef ref{clientId, filter.str()};
        node->raster.remove(ref);
        std::erase(node->allFence, ref);
        if (fence) {
            node->raster.put(ref, *fence);
        } else {
            node->allFence.push_back(ref);
        }
        auto& existing = clientSubs_[clientId];
        if (existing.insert_or_assign(filter.str(), std::move(fence)).second) ++subCount_;
    }

    /// Remove the (client, filter) subscription. Returns false if it did not
    /// exist. Emptied tree nodes are pruned.
    bool unsubscribe(const std::string& clientId, const TopicFilter& filter) {
        std::unique_lock lock(mu_);
        return unsubscribeLocked(clientId, filter.levels(), filter.str());
    }

    /// Drop the client's location and all of its subscriptions. Returns the
    /// number of subscriptions removed.
    size_t removeClient(const std::string& clientId) {
        std::unique_lock lock(mu_);
        locations_.erase(clientId);
        auto it = clientSubs_.find(clientId);
        if (it == clientSubs_.end()) return 0;
        std::vector<std::string> filters;
        filters.reserve(it->second.size());
        for (const auto& [text, fence] : it->second) filters.push_back(text);
        size_t removed = 0;
        for (const auto& text : filters) {
            if (unsubscribeLocked(clientId, topic_detail::splitLevels(text), text)) ++removed;
        }
        return removed;
    }

    /// Clients that should receive a publish on this topic, given the
    /// publisher's registered location and its (optional) fence. Each client
    /// id appears once; the result is sorted. Throws if the publisher has no
    /// registered location.
    std::vector<std::string> match(const Topic& topic, const std::string& publisherId,
                                   const std::optional<Geofence>& publisherFence) const {
        std::shared_lock lock(mu_);
        auto locIt = locations_.find(publisherId);
        if (locIt == locations_.end()) {
            throw std::invalid_argument("publisher has no registered location: " + publisherId);
        }
        const Location pubLoc = locIt->second;

        std::vector<std::string> out;
        auto producerCheck = [&](const std::string& consumerId) {
            if (!publisherFence) return true;
            auto it = locations_.find(consumerId);
            return it != locations_.end() && publisherFence->contains(it->second);
        };
        forEachMatchingNode(topic, [&](const Node& node) {
            if (const auto* candidates = node.raster.candidatesAt(pubLoc)) {
                for (const SubscriptionRef& ref : *candidates) {
                    const Geofence& consumerFence = node.raster.live().at(ref);
                    if (!consumerFence.contains(pubLoc)) continue;
                    if (producerCheck(ref.clientId)) out.push_back(ref.clientId);
                }
            }
            for (const SubscriptionRef& ref : node.allFence) {
                if (producerCheck(ref.clientId)) out.push_back(ref.clientId);
            }
        });
        sortUnique(out);
        return out;
    }

    /// Clients whose filter matches the topic, ignoring all geo context.
    std::vector<std::string> matchContentOnly(const Topic& topic) const {
        std::shared_lock lock(mu_);
        std::vector<std::string> out;
        forEachMatchingNode(topic, [&](const Node& node) {
            for (const auto& [ref, fence] : node.raster.live()) out.push_back(ref.clientId);
            for (const SubscriptionRef& ref : node.allFence) out.push_back(ref.clientId);
        });
        sortUnique(out);
        return out;
    }

    size_t subscriptionCount() const {
        std::shared_lock lock(mu_);
        return subCount_;
    }

    std::vector<std::string> filtersOf(const std::string& clientId) const {
        std::shared_lock lock(mu_);
        std::vector<std::string> out;
        auto it = clientSubs_.find(clientId);
        if (it == clientSubs_.end()) return out;
        for (const auto& [text, fence] : it->second) out.push_back(text);
        return out;
    }

private:
    struct Node {
        Node(int granularity, bool finalCheck) : raster(granularity, finalCheck) {}
        std::map<std::string, std::unique_ptr<Node>> children;
        Raster raster;
        std::vector<SubscriptionRef> allFence;

        bool prunable() const { return children.empty() && raster.empty() && allFence.empty(); }
    };

    bool unsubscribeLocked(const std::string& clientId, const std::vector<std::string>& levels,
                           const std::string& filterText) {
        std::vector<std::pair<Node*, const std::string*>> path;  // parent, label into it
        Node* node = &root_;
        for (const auto& level : levels) {
            auto it = node->children.find(level);
            if (it == node->children.end()) return false;
            path.emplace_back(node, &it->first);
            node = it->second.get();
        }
        const SubscriptionRef ref{clientId, filterText};
        bool existed = false;
        auto cit = clientSubs_.find(clientId);
        if (cit != clientSubs_.end() && cit->second.erase(filterText) > 0) {
            existed = true;
            --subCount_;
            if (cit->second.empty()) clientSubs_.erase(cit);
        }
        node->raster.remove(ref);
        std::erase(node->allFence, ref);
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            Node* child = it->first->children.at(*it->second).get();
            if (!child->prunable()) break;
            it->first->children.erase(*it->second);
        }
        return existed;
    }

    /// Walk the tree along the topic, treating "+" and "#" children as
    /// wildcard branches. A "#" child matches any remaining levels, including
    /// none.
    template <typename Fn>
    void forEachMatchingNode(const Topic& topic, Fn&& fn) const {
        visit(root_, topic.levels(), 0, fn);
    }

    template <typename Fn>
    static void visit(const Node& node, const std::vector<std::string>& levels, size_t i, Fn& fn) {
        if (auto it = node.children.find("#"); it != node.children.end()) fn(*it->second);
        if (i == levels.size()) {
            fn(node);
            return;
        }
        if (auto it = node.children.find(levels[i]); it != node.children.end()) {
            visit(*it->second, levels, i + 1, fn);
        }
        if (levels[i] != "+") {
            if (auto it = node.children.find("+"); it != node.children.end()) {
                visit(*it->second, levels, i + 1, fn);
            }
        }
    }

    static void sortUnique(std::vector<std::string>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    int granularity_;
    bool finalIntersectionCheck_;
    Node root_;
    size_t subCount_{0};
    std::unordered_map<std::string, Location> locations_;
    std::unordered_map<std::string, std::map<std::string, std::optional<Geofence>>> clientSubs_;
    mutable std::shared_mutex mu_;
};

}  // namespace geomq
