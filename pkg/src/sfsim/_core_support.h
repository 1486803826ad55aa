// Event record for the compiled simulation kernel.
#pragma once
#include <cstdint>

struct SimEvent {
    int64_t t;
    int64_t seq;
    int kind;
    int a;
    int64_t b;
    int64_t c;
    // std::priority_queue is a max-heap: invert so top() is the earliest (t, seq)
    bool operator<(const SimEvent& o) const {
        if (t != o.t) return t > o.t;
        return seq > o.seq;
    }
};

struct GqEntry {
    int task;
    int64_t enq;
    int64_t hint;
};
