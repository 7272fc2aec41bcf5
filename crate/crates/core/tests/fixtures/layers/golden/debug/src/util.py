def compute(n):
    acc = 0
    for i in range(n):
        acc += i
    print("debug: acc =", acc)
    return acc
