"""Product records for the rough-filter tests."""

from raea.rough_filter import ProductRecord

EBAY_CATEGORY = ["Outdoor fitness", "mountaineering", "rock climbing", "ice climbing equipment",
                 "anti-skating claw"]

# the six roughly matched titles listed for that category
TABLE3_TITLES = [
    "GRIVEL air tech light new-matic crampons",
    "black anti-slip pair ice snow shoe spikes grips crampons hiking fishing climbing",
    "STUBAI ultralight crampons pro",
    "ESUMIC anti-slip shoes ice gripper cleats crampons with pouch carabiner",
    "ice traction universal slip-on stretch fit snow ice spikes (grips, crampons, cleats) size L (black)",
    "KAHTOOLA steel hiking crampons",
]

DISTRACTORS = [
    ("Sports", "Yoga", "yoga mat non-slip"),
    ("Winter sports", "Traction", "crampons for ice climbing"),
    ("Outdoor", "Climbing", "dynamic climbing rope 60m"),
    ("Outdoor", "Climbing", "climbing harness adjustable"),
    ("Outdoor", "Hiking", "trekking poles carbon"),
    ("Footwear", "Boots", "insulated winter boots"),
    ("Outdoor", "Camping", "two person tent"),
    ("Outdoor", "Hiking", "gaiters waterproof"),
    ("Tools", "Garden", "garden rake steel"),
    ("Kitchen", "Utensils", "ice cream scoop"),
    ("Fitness", "Cardio", "jump rope speed"),
    ("Outdoor", "Snow", "snowshoes aluminium frame"),
    ("Fishing", "Ice fishing", "ice auger hand drill"),
    ("Outdoor", "Hiking", "microspikes traction cleats"),
    ("Sports", "Skating", "figure skates white"),
    ("Outdoor", "Climbing", "chalk bag with belt"),
    ("Outdoor", "Mountaineering", "ice axe walking"),
    ("Clothing", "Accessories", "wool climbing socks"),
    ("Outdoor", "Snow", "avalanche shovel"),
    ("Toys", "Puzzles", "crampon shaped keychain climbing"),
]


def table3_candidates():
    return [ProductRecord(f"amz{i}", title, ["Sports & Outdoors", "Climbing", "Ice climbing"])
            for i, title in enumerate(TABLE3_TITLES)]


def distractor_candidates():
    return [ProductRecord(f"dis{i}", title, [a, b]) for i, (a, b, title) in enumerate(DISTRACTORS)]


def ebay_query():
    return ProductRecord("ebay0", "kahtoola microspikes", list(EBAY_CATEGORY))
