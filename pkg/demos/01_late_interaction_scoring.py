"""Late-interaction scoring from the ground up.

Builds token matrices for a toy conversation, walks through the
length-normalized MaxSim kernel, and shows the two properties the
normalization buys: robustness to text length and asymmetry.
"""

from ncli_ground import HashedProvider, ProjectionMatrix, ncli, ncolbert, reduce_and_normalize

provider = HashedProvider(seed=0, dim=64)
projection = ProjectionMatrix.create(seed=0, d=64)  # reduces to d0 = 16


def matrix(text: str):
    return reduce_and_normalize(provider.embed(text), projection)


# A user asks about a landmark; two knowledge entries compete.
question = matrix("when was the eiffel tower built and how tall is it")
on_topic = matrix("the eiffel tower was built in 1889 and is 330 meters tall")
off_topic = matrix("the louvre is the most visited art museum in the world")

print("knowledge vs question (NColBERT):")
print(f"  on-topic : {ncolbert(on_topic, question):.4f}")
print(f"  off-topic: {ncolbert(off_topic, question):.4f}")

# Length normalization: repeating a text does not inflate its score.
repeated = matrix(" ".join(["the eiffel tower was built in 1889 and is 330 meters tall"] * 3))
print("\nlength normalization (same content, tripled):")
print(f"  single : {ncolbert(on_topic, question):.6f}")
print(f"  tripled: {ncolbert(repeated, question):.6f}")

# Asymmetry: every token of a short text may be covered by a long one,
# while the long text has many uncovered tokens.
print("\nasymmetry of the kernel:")
print(f"  ncolbert(question, knowledge) = {ncolbert(question, on_topic):.4f}")
print(f"  ncolbert(knowledge, question) = {ncolbert(on_topic, question):.4f}")

# The pairwise form scores whole candidate lists at once.
personas = [matrix("i love visiting paris"), matrix("i am afraid of heights")]
sim = ncli(personas, [question], "persona", "utterance")
print("\npersona-vs-utterance similarity matrix (2 x 1):")
for i, row in enumerate(sim.values):
    print(f"  persona {i}: {row[0]:.4f}")
