// Concurrent sorted sets: sequential oracle equivalence, the pinned
// marked-segment trace, and concurrent set-semantics invariants.

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "nbr/bench.hpp"  // make_reclaimer + AnyList facade

using namespace nbr;

namespace {

Config ds_cfg(bool validation = true) {
  Config cfg;
  cfg.max_threads = 8;
  cfg.limbo_threshold = 256;  // small enough that reclamation actually runs
  cfg.validation = validation;
  return cfg;
}

}  // namespace

// -- sequential oracle ------------------------------------------------

// Every (structure, reclaimer) pair must behave exactly like std::set
// under a single thread: same per-operation results, same final content.
TEST(Sequential, MatchesStdSetOracle) {
  const char* structures[] = {"lazylist", "harrislist"};
  const char* schemes[] = {"nbr", "nbrplus", "ebr", "hp", "leaky"};
  for (const char* ds : structures) {
    for (const char* smr : schemes) {
      SmrDomain dom(ds_cfg());
      auto rec = make_reclaimer(smr, dom);
      detail::AnyList list = [&]() -> detail::AnyList {
        try {
          return detail::AnyList::make(ds, *rec);
        } catch (const unsupported_combination&) {
          return {};
        }
      }();
      if (!list.lazy && !list.harris) {
        EXPECT_STREQ(smr, "hp");
        EXPECT_STREQ(ds, "harrislist");
        continue;
      }
      ThreadContext& ctx = dom.registry().register_thread();
      std::set<long long> oracle;
      std::mt19937_64 rng(2026);
      for (int i = 0; i < 6000; ++i) {
        const long long key = static_cast<long long>(rng() % 64);
        switch (rng() % 3) {
          case 0:
            EXPECT_EQ(list.insert(ctx, key), oracle.insert(key).second)
                << ds << "/" << smr << " insert " << key << " at op " << i;
            break;
          case 1:
            EXPECT_EQ(list.erase(ctx, key), oracle.erase(key) == 1)
                << ds << "/" << smr << " erase " << key << " at op " << i;
            break;
          default:
            EXPECT_EQ(list.contains(ctx, key), oracle.count(key) == 1)
                << ds << "/" << smr << " contains " << key << " at op " << i;
        }
      }
      const std::vector<long long> keys =
          list.lazy ? list.lazy->unsafe_keys() : list.harris->unsafe_keys();
      EXPECT_EQ(keys, std::vector<long long>(oracle.begin(), oracle.end()))
          << ds << "/" << smr;
      EXPECT_EQ(dom.poison_detections(), 0u);
      rec->unregister_drain(ctx);
      dom.registry().unregister_thread(ctx);
    }
  }
}

// -- the pinned marked-segment trace ----------------------------------

// List 1,2,3,4,6,10 with 3 marked (logically deleted but still linked):
// insert(9) first unlinks 3 in an auxiliary write phase, re-traverses
// from the head in a second read phase, then links 9. Final list:
// 1,2,4,6,9,10.
TEST(HarrisTrace, InsertUnlinksMarkedNodeThenLinks) {
  SmrDomain dom(ds_cfg());
  NbrReclaimer r(dom);
  HarrisList list(r);
  ThreadContext& ctx = dom.registry().register_thread();
  for (long long k : {1, 2, 3, 4, 6, 10}) ASSERT_TRUE(list.insert(ctx, k));

  // Mark 3 by hand: freeze its outgoing edge, as a stalled erase would.
  HarrisNode* n = harris_ref(list.head()->next.load());
  while (n->key != 3) n = harris_ref(n->next.load());
  n->next.fetch_or(1, std::memory_order_seq_cst);

  const std::uint64_t retired_before = dom.retired_total();
  std::vector<unsigned> phases;
  ctx.read_phase_hook = [&](ThreadContext&, unsigned idx) { phases.push_back(idx); };
  EXPECT_TRUE(list.insert(ctx, 9));
  ctx.read_phase_hook = nullptr;

  EXPECT_EQ(phases, (std::vector<unsigned>{1, 2}))
      << "one read phase to find the segment, one to re-traverse and link";
  EXPECT_EQ(dom.retired_total(), retired_before + 1) << "the unlink retired node 3";
  EXPECT_EQ(list.unsafe_keys(), (std::vector<long long>{1, 2, 4, 6, 9, 10}));
  EXPECT_EQ(dom.poison_detections(), 0u);

  r.unregister_drain(ctx);
  dom.registry().unregister_thread(ctx);
}

TEST(HarrisTrace, ContainsHelpsUnlinkMarkedSegment) {
  SmrDomain dom(ds_cfg());
  NbrReclaimer r(dom);
  HarrisList list(r);
  ThreadContext& ctx = dom.registry().register_thread();
  for (long long k : {1, 2, 3}) ASSERT_TRUE(list.insert(ctx, k));
  HarrisNode* n = harris_ref(list.head()->next.load());
  while (n->key != 2) n = harris_ref(n->next.load());
  n->next.fetch_or(1, std::memory_order_seq_cst);

  EXPECT_FALSE(list.contains(ctx, 2)) << "marked means logically absent";
  EXPECT_EQ(list.unsafe_keys(), (std::vector<long long>{1, 3}))
      << "the search physically unlinked the marked node";
  r.unregister_drain(ctx);
  dom.registry().unregister_thread(ctx);
}

TEST(LazyTrace, EraseMarksThenUnlinksAndRetires) {
  SmrDomain dom(ds_cfg());
  NbrReclaimer r(dom);
  LazyList list(r);
  ThreadContext& ctx = dom.registry().register_thread();
  ASSERT_TRUE(list.insert(ctx, 5));
  ASSERT_TRUE(list.erase(ctx, 5));
  EXPECT_FALSE(list.contains(ctx, 5));
  EXPECT_FALSE(list.erase(ctx, 5)) << "second erase misses";
  EXPECT_EQ(dom.retired_total(), 1u);
  EXPECT_TRUE(list.unsafe_keys().empty());
  r.unregister_drain(ctx);
  dom.registry().unregister_thread(ctx);
}

// -- concurrent set semantics -----------------------------------------

namespace {

// Runs `threads` workers over one list and checks the post-run set
// invariants: sorted, duplicate-free, and size == prefill + inserted -
// removed (counting successful operations only).
void concurrent_invariant_run(const std::string& ds, const std::string& smr) {
  SmrDomain dom(ds_cfg());
  auto rec = make_reclaimer(smr, dom);
  detail::AnyList list = detail::AnyList::make(ds, *rec);

  const long long key_range = 128;
  std::size_t prefill = 0;
  {
    ThreadContext& ctx = dom.registry().register_thread();
    for (long long k = 0; k < key_range; k += 2) {
      ASSERT_TRUE(list.insert(ctx, k));
      ++prefill;
    }
    rec->unregister_drain(ctx);
    dom.registry().unregister_thread(ctx);
  }

  const unsigned threads = 4;
  std::atomic<std::uint64_t> inserted{0}, removed{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      ThreadContext& ctx = dom.registry().register_thread();
      std::mt19937_64 rng(1000 + w);
      std::uint64_t ins = 0, rem = 0;
      for (int i = 0; i < 20000; ++i) {
        const long long key = static_cast<long long>(rng() % key_range);
        switch (rng() % 3) {
          case 0: ins += list.insert(ctx, key); break;
          case 1: rem += list.erase(ctx, key); break;
          default: list.contains(ctx, key);
        }
      }
      inserted.fetch_add(ins);
      removed.fetch_add(rem);
      rec->unregister_drain(ctx);
      dom.registry().unregister_thread(ctx);
    });
  }
  for (auto& t : pool) t.join();

  const std::vector<long long> keys =
      list.lazy ? list.lazy->unsafe_keys() : list.harris->unsafe_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end())) << ds << "/" << smr;
  EXPECT_EQ(std::adjacent_find(keys.begin(), keys.end()), keys.end())
      << ds << "/" << smr << ": duplicate key";
  EXPECT_EQ(keys.size(), prefill + inserted.load() - removed.load())
      << ds << "/" << smr;
  EXPECT_EQ(dom.poison_detections(), 0u) << ds << "/" << smr;
  EXPECT_EQ(dom.retired_total(),
            dom.freed_total() + static_cast<std::uint64_t>(dom.unreclaimed()))
      << ds << "/" << smr << ": retire/free accounting must balance";
}

}  // namespace

TEST(Concurrent, LazyListWithNbr) { concurrent_invariant_run("lazylist", "nbr"); }
TEST(Concurrent, LazyListWithHp) { concurrent_invariant_run("lazylist", "hp"); }
TEST(Concurrent, HarrisListWithNbrPlus) {
  concurrent_invariant_run("harrislist", "nbrplus");
}
TEST(Concurrent, HarrisListWithEbr) { concurrent_invariant_run("harrislist", "ebr"); }

TEST(Combos, HarrisRejectsHazardPointers) {
  SmrDomain dom(ds_cfg());
  auto hp = make_reclaimer("hp", dom);
  EXPECT_THROW(detail::AnyList::make("harrislist", *hp), unsupported_combination);
  EXPECT_THROW(detail::AnyList::make("skiplist", *hp), invalid_spec);
}
