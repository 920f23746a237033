import json, random
from rouge_score import rouge_scorer
random.seed(20241016)
vocab = ["the","cat","sat","on","mat","dog","Real","Madrid","won","final","2-0","Wembley","stadium","record","title","June","match","team","scored","goal","a","of","in","and","15th","European","Cup"]
punct = ["", "", "", ",", ".", "!", "?", ";"]
def sent():
    n = random.randint(0, 18)
    return " ".join(random.choice(vocab) + random.choice(punct) for _ in range(n))
sc = rouge_scorer.RougeScorer(['rouge1','rouge2','rougeL'])
cases = []
fixed = [("the cat sat on the mat","the cat was on the mat")]
pairs = fixed + [(sent(), sent()) for _ in range(200)]
for c, r in pairs:
    s = sc.score(r, c)  # score(target, prediction)
    cases.append({"candidate": c, "reference": r,
      "rouge1": [s['rouge1'].precision, s['rouge1'].recall, s['rouge1'].fmeasure],
      "rouge2": [s['rouge2'].precision, s['rouge2'].recall, s['rouge2'].fmeasure],
      "rougeL": [s['rougeL'].precision, s['rougeL'].recall, s['rougeL'].fmeasure]})
json.dump(cases, open("rouge_oracle.json","w"), indent=1)
print(len(cases), cases[0])
