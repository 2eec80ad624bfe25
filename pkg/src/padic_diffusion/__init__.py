"""p-adic heat kernels, ball jump processes and a porous-medium solver on p-adic balls."""
