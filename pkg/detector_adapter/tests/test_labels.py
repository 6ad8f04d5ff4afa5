from detector_adapter.labels import load_label_map, normalize, to_vocabulary


class TestNormalize:
    def test_lowercases(self):
        assert normalize("The TV") == "tv"
        assert normalize("Banana") == "banana"

    def test_strips_leading_articles(self):
        assert normalize("a potted plant") == "potted plant"
        assert normalize("an apple") == "apple"
        assert normalize("the a cat") == "cat"

    def test_articles_inside_stay(self):
        assert normalize("man on the moon") == "man on the moon"

    def test_collapses_whitespace(self):
        assert normalize("  AN   Apple  ") == "apple"

    def test_article_only_becomes_empty(self):
        assert normalize("the") == ""
        assert normalize(" a ") == ""


class TestVocabulary:
    def test_explicit_table(self):
        assert to_vocabulary("the telly", {"telly": "tv"}) == "tv"

    def test_shipped_table(self):
        assert to_vocabulary("television") == "tv"
        assert to_vocabulary("The sofa") == "couch"
        assert to_vocabulary("a houseplant") == "potted plant"

    def test_unmapped_passes_through(self):
        assert to_vocabulary("wombat") == "wombat"

    def test_table_keys_are_pre_normalized(self):
        table = load_label_map()
        assert table
        for key, value in table.items():
            assert normalize(key) == key
            assert isinstance(value, str) and value
