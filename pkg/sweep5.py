"""Scratch sweep 5: ridge-probe shortcut preference."""
from sweep4 import run

if __name__ == "__main__":
    seeds = (0, 1, 2)
    run("V wd.01       ", seeds, d_f=32, probe=(500, 1.0, 0.01))
    run("W wd.03       ", seeds, d_f=32, probe=(500, 1.0, 0.03))
    run("X wd.1        ", seeds, d_f=32, probe=(500, 1.0, 0.1))
    run("Y wd.03 g3 a.8", seeds, d_f=32, gamma=3.0, alpha=0.8, probe=(500, 1.0, 0.03))
    run("Z wd.1  g3 a.8", seeds, d_f=32, gamma=3.0, alpha=0.8, probe=(500, 1.0, 0.1))
