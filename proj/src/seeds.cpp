#include "pdgsim/datagen.hpp"

namespace pdgsim {

namespace {

std::vector<SeedGroup> make_builtin() {
  return {
      {"array_sum",
       {{"forward_scan", R"(def sum(a, n) {
  s = 0;
  i = 0;
  while (i < n) {
    s = s + a[i];
    i = i + 1;
  }
  return s;
}
)"},
        {"two_pointer", R"(def sum(a, n) {
  s = 0;
  lo = 0;
  hi = n - 1;
  while (lo < hi) {
    s = s + a[lo] + a[hi];
    lo = lo + 1;
    hi = hi - 1;
  }
  if (lo == hi) {
    s = s + a[lo];
  }
  return s;
}
)"}}},
      {"max_scan",
       {{"running_max", R"(def largest(a, n) {
  m = a[0];
  i = 1;
  while (i < n) {
    if (a[i] > m) {
      m = a[i];
    }
    i = i + 1;
  }
  return m;
}
)"},
        {"best_index", R"(def largest(a, n) {
  best = 0;
  for (i = 1; i < n; i = i + 1) {
    if (a[best] < a[i]) {
      best = i;
    }
  }
  return a[best];
}
)"}}},
      {"gcd_loop",
       {{"subtraction", R"(def gcd(a, b) {
  while (a != b) {
    if (a > b) {
      a = a - b;
    } else {
      b = b - a;
    }
  }
  return a;
}
)"},
        {"remainder", R"(def gcd(a, b) {
  while (b != 0) {
    t = a % b;
    a = b;
    b = t;
  }
  return a;
}
)"}}},
      {"linear_search",
       {{"early_exit", R"(def find(a, n, key) {
  i = 0;
  while (i < n) {
    if (a[i] == key) {
      return i;
    }
    i = i + 1;
  }
  return -1;
}
)"},
        {"backward_scan", R"(def find(a, n, key) {
  pos = -1;
  for (i = n - 1; i >= 0; i = i - 1) {
    if (a[i] == key) {
      pos = i;
    }
  }
  return pos;
}
)"}}},
      {"counting_loop",
       {{"count_up", R"(def count_above(a, n, t) {
  c = 0;
  for (i = 0; i < n; i = i + 1) {
    if (a[i] > t) {
      c = c + 1;
    }
  }
  return c;
}
)"},
        {"count_down", R"(def count_above(a, n, t) {
  c = n;
  i = 0;
  while (i < n) {
    if (a[i] <= t) {
      c = c - 1;
    }
    i = i + 1;
  }
  return c;
}
)"}}},
      {"nested_accumulate",
       {{"double_loop", R"(def grid_sum(n, m) {
  s = 0;
  for (i = 0; i < n; i = i + 1) {
    for (j = 0; j < m; j = j + 1) {
      s = s + i * j;
    }
  }
  return s;
}
)"},
        {"row_totals", R"(def grid_sum(n, m) {
  s = 0;
  i = 0;
  while (i < n) {
    row = 0;
    j = 0;
    while (j < m) {
      row = row + j;
      j = j + 1;
    }
    s = s + row * i;
    i = i + 1;
  }
  return s;
}
)"}}},
      {"fibonacci",
       {{"rolling_pair", R"(def fib(n) {
  x = 0;
  y = 1;
  i = 0;
  while (i < n) {
    t = x + y;
    x = y;
    y = t;
    i = i + 1;
  }
  return x;
}
)"},
        {"table", R"(def fib(n, f) {
  f[0] = 0;
  f[1] = 1;
  for (i = 2; i <= n; i = i + 1) {
    f[i] = f[i - 1] + f[i - 2];
  }
  return f[n];
}
)"}}},
      {"dispatch",
       {{"switch_table", R"(def apply(op, a, b) {
  switch (op) {
    case 0: {
      r = a + b;
    }
    case 1: {
      r = a - b;
    }
    case 2: {
      r = a * b;
    }
    default: {
      throw op;
    }
  }
  call log(op, r);
  return r;
}
)"},
        {"if_chain", R"(def apply(op, a, b) {
  if (op == 0) {
    r = a + b;
  } else {
    if (op == 1) {
      r = a - b;
    } else {
      if (op == 2) {
        r = a * b;
      } else {
        throw op;
      }
    }
  }
  call log(op, r);
  return r;
}
)"}}},
  };
}

}  // namespace

const std::vector<SeedGroup>& builtin_seed_groups() {
  static const std::vector<SeedGroup> groups = make_builtin();
  return groups;
}

}  // namespace pdgsim
