import numpy as np
from scipy.optimize import minimize

# Parameters
G_1 = 1
G_2 = 1
G_3 = 1
G_4 = 1
G_5 = 1
N0 = 0.001
Pmax = 10

# Variables
# x[0] = p_1
# x[1] = p_2
# x[2] = p_3
# x[3] = p_4
# x[4] = p_5

# Objective
def objective(x):
    return -(np.log2(1 + x[0]*G_1/N0) + np.log2(1 + x[1]*G_2/N0) + np.log2(1 + x[2]*G_3/N0) + np.log2(1 + x[3]*G_4/N0) + np.log2(1 + x[4]*G_5/N0))

# Constraints
def constraint_1(x):
    return -x[0] - x[1] - x[2] - x[3] - x[4] + Pmax

def constraint_2(x):
    return np.array([
        -2**5 + 1 + x[0]*G_1/N0,
        -2**5 + 1 + x[1]*G_2/N0,
        -2**5 + 1 + x[2]*G_3/N0,
        -2**5 + 1 + x[3]*G_4/N0,
        -2**5 + 1 + x[4]*G_5/N0,
    ])

# Initial guess
x0 = np.array([5, 5, 5, 5, 5])

# Bounds
bounds = [(0, 10), (0, 10), (0, 10), (0, 10), (0, 10)]

constraints = [
    {'type': 'ineq', 'fun': constraint_1},
    {'type': 'ineq', 'fun': constraint_2},
]

result = minimize(objective, x0, bounds=bounds, constraints=constraints)

print("Objective value:", -result.fun)
print("Solution:", result.x)
