#pragma once

// Rating data model: sparse long-format binary observations indexed by
// student, rater, and item. Datasets are immutable once built and safe to
// share across threads.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ratercap/common.hpp"

namespace ratercap {

struct RatingRecord {
    std::string student_id;
    std::string rater_id;
    std::string item_id;
    int score = 0;            // binary {0,1}
    std::string group_label;  // optional, e.g. essay topic

    RatingRecord() = default;
    RatingRecord(std::string s, std::string r, std::string i, int y, std::string g = "")
        : student_id(std::move(s)), rater_id(std::move(r)), item_id(std::move(i)), score(y),
          group_label(std::move(g)) {}
};

// One observation with contiguous indices n, r, i.
struct Obs {
    std::int32_t student = 0;
    std::int32_t rater = 0;
    std::int32_t item = 0;
    std::int8_t y = 0;
};

class RatingDataset {
  public:
    RatingDataset() = default;

    static RatingDataset from_records(const std::vector<RatingRecord>& records) {
        RatingDataset d;
        std::unordered_map<std::string, std::int32_t> smap, rmap, imap;
        auto intern = [](std::unordered_map<std::string, std::int32_t>& m,
                         std::vector<std::string>& ids, const std::string& key) {
            auto it = m.find(key);
            if (it != m.end()) return it->second;
            std::int32_t idx = static_cast<std::int32_t>(ids.size());
            m.emplace(key, idx);
            ids.push_back(key);
            return idx;
        };
        std::set<std::uint64_t> seen;
        d.obs_.reserve(records.size());
        for (const auto& rec : records) {
            if (rec.student_id.empty() || rec.rater_id.empty() || rec.item_id.empty())
                throw invalid_input_error("rating record has an empty identifier");
            if (rec.score != 0 && rec.score != 1)
                throw invalid_input_error("rating score must be 0 or 1 (student " +
                                          rec.student_id + ", rater " + rec.rater_id + ")");
            Obs o;
            o.student = intern(smap, d.student_ids_, rec.student_id);
            o.rater = intern(rmap, d.rater_ids_, rec.rater_id);
            o.item = intern(imap, d.item_ids_, rec.item_id);
            o.y = static_cast<std::int8_t>(rec.score);
            std::uint64_t key = (static_cast<std::uint64_t>(o.student) << 40) ^
                                (static_cast<std::uint64_t>(o.rater) << 20) ^
                                static_cast<std::uint64_t>(o.item);
            if (!seen.insert(key).second)
                throw invalid_input_error("duplicate (student, rater, item) triple: (" +
                                          rec.student_id + ", " + rec.rater_id + ", " +
                                          rec.item_id + ")");
            d.obs_.push_back(o);
        }
        d.build_index();
        return d;
    }

    std::size_t n_students() const { return student_ids_.size(); }
    std::size_t n_raters() const { return rater_ids_.size(); }
    std::size_t n_items() const { return item_ids_.size(); }
    std::size_t n_records() const { return obs_.size(); }
    bool empty() const { return obs_.empty(); }

    const std::vector<Obs>& observations() const { return obs_; }
    const std::vector<std::string>& student_ids() const { return student_ids_; }
    const std::vector<std::string>& rater_ids() const { return rater_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }

    // Observation indices for one student (CSR layout).
    const std::vector<std::int32_t>& student_obs(std::size_t n) const {
        return by_student_[n];
    }

    // J_n: the set of raters that appear with student n, ascending.
    const std::vector<std::int32_t>& raters_of_student(std::size_t n) const {
        return j_n_[n];
    }

    std::int32_t student_index(const std::string& id) const {
        return find_id(student_ids_, id);
    }
    std::int32_t rater_index(const std::string& id) const { return find_id(rater_ids_, id); }
    std::int32_t item_index(const std::string& id) const { return find_id(item_ids_, id); }

    std::size_t rater_record_count(std::size_t r) const { return rater_count_[r]; }
    std::size_t rater_score_sum(std::size_t r) const { return rater_sum_[r]; }

  private:
    static std::int32_t find_id(const std::vector<std::string>& ids, const std::string& id) {
        auto it = std::find(ids.begin(), ids.end(), id);
        return it == ids.end() ? -1 : static_cast<std::int32_t>(it - ids.begin());
    }

    void build_index() {
        by_student_.assign(n_students(), {});
        j_n_.assign(n_students(), {});
        rater_count_.assign(n_raters(), 0);
        rater_sum_.assign(n_raters(), 0);
        for (std::int32_t k = 0; k < static_cast<std::int32_t>(obs_.size()); ++k) {
            const Obs& o = obs_[k];
            by_student_[o.student].push_back(k);
            rater_count_[o.rater] += 1;
            rater_sum_[o.rater] += o.y;
        }
        for (std::size_t n = 0; n < n_students(); ++n) {
            std::set<std::int32_t> raters;
            for (std::int32_t k : by_student_[n]) raters.insert(obs_[k].rater);
            j_n_[n].assign(raters.begin(), raters.end());
        }
    }

    std::vector<Obs> obs_;
    std::vector<std::string> student_ids_, rater_ids_, item_ids_;
    std::vector<std::vector<std::int32_t>> by_student_;
    std::vector<std::vector<std::int32_t>> j_n_;
    std::vector<std::size_t> rater_count_, rater_sum_;
};

}  // namespace ratercap
