#include <cstdio>

int main() {
  std::puts("cfisac: command line interface not wired up yet");
  return 0;
}
